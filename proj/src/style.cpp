#include "retisynth/style.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "retisynth/image_io.hpp"

namespace retisynth {

namespace {

Tensor as_batch(const Tensor& img) {
  if (img.rank() == 4 && img.dim(0) == 1) return img;
  if (img.rank() != 3) throw DimensionError("stylize: expected C×H×W image, got " + shape_str(img.shape()));
  Shape s{1};
  s.insert(s.end(), img.shape().begin(), img.shape().end());
  return reshape(img, s);
}

void require_divisible(const Tensor& img, int level, const char* role) {
  const std::size_t m = std::size_t{1} << (level - 1);
  if (img.dim(2) % m != 0 || img.dim(3) % m != 0)
    throw DimensionError(std::string("stylize: ") + role + " image " + std::to_string(img.dim(2)) + "x" +
                         std::to_string(img.dim(3)) + " must have sides divisible by " + std::to_string(m) +
                         " for level " + std::to_string(level));
}

void require_level(const StylizerStack& stack, int level) {
  if (level < 1 || static_cast<std::size_t>(level) > stack.levels())
    throw ConfigError("stylize: level " + std::to_string(level) + " not in stack");
}

Tensor clamp_unit(const Tensor& t) {
  std::vector<float> v(t.data().begin(), t.data().end());
  for (auto& x : v) x = std::clamp(x, -1.0f, 1.0f);
  return Tensor(t.shape(), std::move(v));
}

}  // namespace

std::size_t StylizerStack::img_channels() const {
  if (encoders.empty()) throw ConfigError("StylizerStack: empty");
  return encoders.front().input_shape()[0];
}

void StylizerStack::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("StylizerStack: alpha must lie in [0,1]");
  if (encoders.empty() || encoders.size() != decoders.size() || encoders.size() > 4)
    throw ConfigError("StylizerStack: need 1..4 matched encoder/decoder levels");
  const std::size_t c = img_channels();
  NoGradGuard guard;
  for (std::size_t k = 0; k < encoders.size(); ++k) {
    auto enc = encoders[k];
    auto dec = decoders[k];
    if (enc.spec().get_int("level") != static_cast<long>(k + 1) || dec.spec().get_int("level") != static_cast<long>(k + 1))
      throw ConfigError("StylizerStack: level " + std::to_string(k + 1) + " holds a mismatched network");
    const Tensor probe(Shape{1, c, 16, 16}, 0.1f);
    if (dec(enc(probe)).shape() != probe.shape())
      throw DimensionError("StylizerStack: level " + std::to_string(k + 1) + " round trip changes shape");
  }
}

StylizerStack build_stack(std::size_t img_channels, std::uint64_t seed, std::size_t nominal_size) {
  StylizerStack s;
  for (int level = 1; level <= 4; ++level) {
    s.encoders.push_back(build_encoder<float>(level, img_channels, seed + 2 * level, nominal_size));
    s.decoders.push_back(build_decoder<float>(level, img_channels, seed + 2 * level + 1, nominal_size));
  }
  s.validate();
  return s;
}

std::vector<TrainReport> train_stack(StylizerStack& stack, const ImageList& train, const ImageList& heldout,
                                     const AutoencoderConfig& cfg) {
  std::vector<TrainReport> reports;
  for (std::size_t k = 0; k < stack.levels(); ++k) {
    AutoencoderConfig c = cfg;
    c.seed = cfg.seed + k;
    reports.push_back(train_autoencoder(stack.encoders[k], stack.decoders[k], train, heldout, c));
  }
  return reports;
}

linalg::FeatureMatrix to_features(const Tensor& f) {
  if (f.rank() != 4 || f.dim(0) != 1) throw DimensionError("to_features: expected 1×C×H×W, got " + shape_str(f.shape()));
  const Eigen::Index c = static_cast<Eigen::Index>(f.dim(1)), n = static_cast<Eigen::Index>(f.dim(2) * f.dim(3));
  linalg::Matrix m(c, n);
  const auto d = f.data();
  for (Eigen::Index i = 0; i < c; ++i)
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = d[static_cast<std::size_t>(i * n + j)];
  return linalg::FeatureMatrix(std::move(m));
}

Tensor from_features(const linalg::FeatureMatrix& f, std::size_t h, std::size_t w) {
  const auto c = static_cast<std::size_t>(f.channels());
  if (static_cast<std::size_t>(f.samples()) != h * w) throw DimensionError("from_features: sample count mismatch");
  std::vector<float> v(c * h * w);
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < h * w; ++j)
      v[i * h * w + j] = static_cast<float>(f.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
  return Tensor(Shape{1, c, h, w}, std::move(v));
}

linalg::Matrix encoded_covariance(StylizerStack& stack, const Tensor& image, int level) {
  require_level(stack, level);
  NoGradGuard guard;
  auto fm = to_features(stack.encoders[static_cast<std::size_t>(level - 1)](as_batch(image)));
  return linalg::covariance(fm, 0.0);
}

Tensor stylize_single_level(const Tensor& content, const Tensor& style, int level, StylizerStack& stack) {
  require_level(stack, level);
  if (!(stack.alpha >= 0.0 && stack.alpha <= 1.0)) throw ConfigError("stylize: alpha must lie in [0,1]");
  const Tensor c = as_batch(content), s = as_batch(style);
  if (c.dim(1) != s.dim(1))
    throw DimensionError("stylize: content has " + std::to_string(c.dim(1)) + " channels, style has " +
                         std::to_string(s.dim(1)));
  require_divisible(c, level, "content");
  require_divisible(s, level, "style");
  for (const Tensor* t : {&c, &s})
    for (float v : t->data())
      if (!(v >= -1.0f && v <= 1.0f)) throw ContractError("stylize: image values outside [-1,1]");

  NoGradGuard guard;
  auto& enc = stack.encoders[static_cast<std::size_t>(level - 1)];
  auto& dec = stack.decoders[static_cast<std::size_t>(level - 1)];
  const Tensor fc = enc(c), fs = enc(s);
  const auto out = linalg::wct(to_features(fc), to_features(fs), stack.alpha, stack.wct);
  Tensor img = clamp_unit(dec(from_features(out, fc.dim(2), fc.dim(3))));
  return content.rank() == 3 ? reshape(img, content.shape()) : img;
}

Tensor stylize(const Tensor& content, const Tensor& style, StylizerStack& stack) {
  Tensor work = content;
  for (int level = static_cast<int>(stack.levels()); level >= 1; --level)
    work = stylize_single_level(work, style, level, stack);
  return work;
}

Pairing parse_pairing(const std::string& s) {
  if (s == "all_pairs") return Pairing::all_pairs;
  if (s == "zip") return Pairing::zip;
  throw ConfigError("unknown pairing '" + s + "' (all_pairs or zip)");
}

std::vector<StylizeRecord> batch_stylize(const std::vector<NamedImage>& contents,
                                         const std::vector<NamedImage>& styles, Pairing pairing,
                                         StylizerStack& stack, const std::filesystem::path& out_dir) {
  if (contents.empty() || styles.empty()) throw ConfigError("batch_stylize: empty content or style set");
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (pairing == Pairing::zip) {
    if (contents.size() != styles.size())
      throw ConfigError("batch_stylize: zip pairing needs equal counts, got " + std::to_string(contents.size()) +
                        " contents and " + std::to_string(styles.size()) + " styles");
    for (std::size_t i = 0; i < contents.size(); ++i) pairs.emplace_back(i, i);
  } else {
    for (std::size_t i = 0; i < contents.size(); ++i)
      for (std::size_t j = 0; j < styles.size(); ++j) pairs.emplace_back(i, j);
  }
  std::filesystem::create_directories(out_dir);
  std::vector<StylizeRecord> records;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& [ci, si] = pairs[k];
    const Tensor out = stylize(contents[ci].image, styles[si].image, stack);
    std::ostringstream name;
    name << "stylized_" << std::setw(4) << std::setfill('0') << k << ".pnm";
    const auto path = out_dir / name.str();
    save_image(out, path);
    records.push_back({contents[ci].id, styles[si].id, path.string(), stack.alpha, stack.levels()});
  }
  write_text_atomic(out_dir / "manifest.csv", stylize_manifest_csv(records));
  for (const auto& r : records) {
    if (!std::filesystem::exists(r.output_path)) throw LoadError("batch_stylize: missing output " + r.output_path);
    (void)load_image(r.output_path);
  }
  return records;
}

std::string stylize_manifest_csv(const std::vector<StylizeRecord>& records) {
  std::ostringstream os;
  os << "content_path,style_path,output_path,alpha,levels\n";
  for (const auto& r : records)
    os << r.content_path << ',' << r.style_path << ',' << r.output_path << ',' << r.alpha << ',' << r.levels << '\n';
  return os.str();
}

}  // namespace retisynth
