#include "retisynth/config.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "retisynth/errors.hpp"
#include "retisynth/image_io.hpp"

namespace retisynth {

namespace {

using T = ConfigType;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

const ConfigKey* find_key(const std::string& key) {
  const auto& schema = config_schema();
  const auto it = std::find_if(schema.begin(), schema.end(), [&](const auto& k) { return k.key == key; });
  return it == schema.end() ? nullptr : &*it;
}

bool parse_long(const std::string& s, long& out) {
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc{} && r.ptr == s.data() + s.size();
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  std::size_t used = 0;
  try {
    out = std::stod(s, &used);
  } catch (const std::exception&) {
    return false;
  }
  return used == s.size();
}

bool parse_bool(const std::string& s, bool& out) {
  if (s == "true" || s == "1" || s == "yes") return out = true, true;
  if (s == "false" || s == "0" || s == "no") return out = false, true;
  return false;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(trim(item));
  return out;
}

bool type_ok(T type, const std::string& v) {
  long l;
  double d;
  bool b;
  switch (type) {
    case T::integer: return parse_long(v, l);
    case T::real: return parse_double(v, d);
    case T::boolean: return parse_bool(v, b);
    case T::list: {
      const auto items = split_list(v);
      return !items.empty() && std::all_of(items.begin(), items.end(), [&](const auto& i) { return parse_double(i, d); });
    }
    case T::text: return true;
  }
  return false;
}

}  // namespace

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema{
      {"run.seed", T::integer, "0", "master seed; --seed overrides"},
      {"data.kind", T::text, "drusen", "synth-data class: drusen, ga, healthy, or all (n per class)"},
      {"data.modality", T::text, "CFP", "CFP (3-channel) or FA (gray-scale)"},
      {"data.n", T::integer, "100", "images rendered by synth-data"},
      {"data.img_size", T::integer, "64", "image side, 32 or 64"},
      {"data.ga_quadrant", T::integer, "-1", "GA patch quadrant 0-3, -1 for random"},
      {"split.train", T::real, "0.7", "train fraction"},
      {"split.val", T::real, "0.1", "validation fraction"},
      {"split.test", T::real, "0.2", "test fraction"},
      {"gan.steps", T::integer, "1000", "generator updates"},
      {"gan.batch_size", T::integer, "16", "real images per step"},
      {"gan.latent_dim", T::integer, "100", "latent size"},
      {"gan.lr_g", T::real, "2e-4", "generator Adam learning rate"},
      {"gan.lr_d", T::real, "2e-4", "discriminator Adam learning rate"},
      {"gan.beta1", T::real, "0.5", "Adam beta1"},
      {"gan.base_ch", T::integer, "16", "channel width multiplier"},
      {"gan.saturating", T::boolean, "false", "use the saturating generator loss"},
      {"wgan.steps", T::integer, "2000", "generator updates"},
      {"wgan.batch_size", T::integer, "16", "images per critic batch"},
      {"wgan.latent_dim", T::integer, "100", "latent size"},
      {"wgan.lr", T::real, "5e-5", "RMSProp learning rate for both networks"},
      {"wgan.clip", T::real, "0.01", "critic weight clip c"},
      {"wgan.n_critic", T::integer, "5", "critic updates per generator update"},
      {"wgan.base_ch", T::integer, "16", "channel width multiplier"},
      {"classifier.epochs", T::integer, "40", "training epochs"},
      {"classifier.batch_size", T::integer, "16", "minibatch size"},
      {"classifier.lr_high", T::real, "1e-4", "learning rate for the first half of training"},
      {"classifier.lr_low", T::real, "1e-5", "learning rate for the second half"},
      {"classifier.augment_prob", T::real, "0.7", "probability of augmenting a sample"},
      {"classifier.rotation_deg", T::real, "15", "max augmentation rotation"},
      {"classifier.translate", T::real, "0.1", "max augmentation shift as a fraction of size"},
      {"classifier.flip_prob", T::real, "0.5", "horizontal flip probability"},
      {"classifier.base_ch", T::integer, "16", "channel width of the first block"},
      {"ae.steps", T::integer, "1000", "updates per level"},
      {"ae.batch_size", T::integer, "8", "minibatch size"},
      {"ae.lr", T::real, "1e-3", "Adam learning rate"},
      {"ae.heldout_fraction", T::real, "0.1", "images held out for PSNR"},
      {"style.alpha", T::real, "1.0", "blend between stylized (1) and content (0) features"},
      {"style.eps_reg", T::real, "1e-5", "covariance ridge"},
      {"style.eig_floor", T::real, "1e-8", "eigenvalue floor"},
      {"style.pairing", T::text, "all_pairs", "all_pairs or zip"},
      {"generate.n", T::integer, "16", "images sampled by generate"},
      {"sweep.sizes", T::list, "50,100,200", "training-set sizes, ascending"},
      {"sweep.samples", T::integer, "64", "generated images per size"},
      {"report.top_n", T::integer, "5", "classes listed by report"},
  };
  return schema;
}

RunConfig::RunConfig() {
  for (const auto& k : config_schema()) {
    values_[k.key] = k.default_value;
    overridden_[k.key] = false;
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto* k = find_key(key);
  if (!k) throw ConfigError("unknown config key '" + key + "'");
  const auto v = trim(value);
  if (!type_ok(k->type, v)) throw ConfigError("config key '" + key + "': cannot parse '" + v + "'");
  values_[key] = v;
  overridden_[key] = true;
}

bool RunConfig::is_default(const std::string& key) const {
  raw(key);
  return !overridden_.at(key);
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config line " + std::to_string(lineno) + ": unterminated section");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    if (key.find('.') == std::string::npos && !section.empty()) key = section + "." + key;
    try {
      cfg.set(key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse(std::string(bytes.begin(), bytes.end()));
}

const std::string& RunConfig::raw(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

std::string RunConfig::get_string(const std::string& key) const { return raw(key); }

long RunConfig::get_int(const std::string& key) const {
  long v = 0;
  if (!parse_long(raw(key), v)) throw ConfigError("config key '" + key + "' is not an integer");
  return v;
}

double RunConfig::get_double(const std::string& key) const {
  double v = 0;
  if (!parse_double(raw(key), v)) throw ConfigError("config key '" + key + "' is not a number");
  return v;
}

bool RunConfig::get_bool(const std::string& key) const {
  bool v = false;
  if (!parse_bool(raw(key), v)) throw ConfigError("config key '" + key + "' is not a boolean");
  return v;
}

std::vector<double> RunConfig::get_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split_list(raw(key))) {
    double v = 0;
    if (!parse_double(item, v)) throw ConfigError("config key '" + key + "' is not a number list");
    out.push_back(v);
  }
  return out;
}

std::string RunConfig::echo() const {
  std::ostringstream os;
  std::string section;
  for (const auto& k : config_schema()) {
    const auto dot = k.key.find('.');
    const auto sec = k.key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) os << '\n';
      os << '[' << sec << "]\n";
      section = sec;
    }
    os << "# " << k.doc << " (default " << k.default_value << ")\n";
    os << k.key.substr(dot + 1) << " = " << values_.at(k.key) << '\n';
  }
  return os.str();
}

}  // namespace retisynth
