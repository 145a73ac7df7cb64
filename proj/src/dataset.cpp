#include "retisynth/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "retisynth/image_io.hpp"

namespace retisynth {

namespace fs = std::filesystem;

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::none: break;
  }
  return "none";
}

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::wgan: return "wgan";
    case Provenance::styletransfer: return "styletransfer";
    case Provenance::real: break;
  }
  return "real";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  if (s == "none" || s.empty()) return Split::none;
  throw FormatError("unknown split '" + s + "'");
}

Provenance parse_provenance(const std::string& s) {
  if (s == "real") return Provenance::real;
  if (s == "wgan") return Provenance::wgan;
  if (s == "styletransfer") return Provenance::styletransfer;
  throw FormatError("unknown provenance '" + s + "'");
}

int DatasetManifest::label_index(const std::string& label) const {
  const auto it = std::find(classes.begin(), classes.end(), label);
  if (it == classes.end()) throw LabelError("label '" + label + "' not in class vocabulary");
  return static_cast<int>(it - classes.begin());
}

std::size_t DatasetManifest::count(Split s) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [&](const auto& e) { return e.split == s; }));
}

std::string manifest_csv(const DatasetManifest& m) {
  std::ostringstream os;
  os << "path,label,modality,split,provenance,split_seed\n";
  for (const auto& e : m.entries) {
    if (e.path.find(',') != std::string::npos) throw FormatError("manifest: comma in path " + e.path);
    os << e.path << ',' << e.label << ',' << to_string(e.modality) << ',' << to_string(e.split) << ','
       << to_string(e.provenance) << ',' << m.split_seed << '\n';
  }
  return os.str();
}

DatasetManifest parse_manifest(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line.rfind("path,label,modality,split,provenance", 0) != 0)
    throw FormatError("manifest: missing header");
  DatasetManifest m;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() < 5) throw FormatError("manifest: line " + std::to_string(lineno) + " has " + std::to_string(f.size()) + " fields");
    try {
      ManifestEntry e{f[0], f[1], parse_modality(f[2]), parse_split(f[3]), parse_provenance(f[4])};
      if (f.size() > 5) m.split_seed = std::stoull(f[5]);
      m.entries.push_back(std::move(e));
    } catch (const std::exception& e) {
      throw FormatError("manifest: line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  for (const auto& e : m.entries)
    if (std::find(m.classes.begin(), m.classes.end(), e.label) == m.classes.end()) m.classes.push_back(e.label);
  return m;
}

DatasetManifest read_manifest(const fs::path& path) {
  const auto bytes = read_file(path);
  return parse_manifest(std::string(bytes.begin(), bytes.end()));
}

void write_manifest(const DatasetManifest& m, const fs::path& path) { write_text_atomic(path, manifest_csv(m)); }

void validate_manifest(const DatasetManifest& m, const fs::path& base_dir) {
  for (const auto& e : m.entries) {
    const fs::path p = base_dir / e.path;
    if (!fs::exists(p)) throw LoadError("manifest entry missing: " + p.string());
    (void)read_pnm(p);
  }
}

DatasetManifest synth_corpus(SymptomKind kind, Modality modality, std::size_t n, std::size_t img_size,
                             std::uint64_t seed, const fs::path& out_dir, const RenderOptions& opts) {
  if (n < 1) throw ConfigError("synth_corpus: n must be >= 1");
  fs::create_directories(out_dir);
  DatasetManifest m;
  for (std::size_t i = 0; i < n; ++i) {
    char name[64];
    std::snprintf(name, sizeof name, "%s_%s_%05zu.pnm", to_string(kind).c_str(), to_string(modality).c_str(), i);
    save_image(render_fundus(kind, modality, img_size, seed, i, opts), out_dir / name);
    m.entries.push_back({name, to_string(kind), modality, Split::none, Provenance::real});
  }
  return m;
}

std::array<std::size_t, 3> split_counts(std::size_t n, const std::array<double, 3>& ratios) {
  std::array<std::size_t, 3> out{};
  std::array<double, 3> frac{};
  std::size_t used = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = ratios[i] * static_cast<double>(n);
    out[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    frac[i] = exact - static_cast<double>(out[i]);
    used += out[i];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; used < n; k = (k + 1) % 3, ++used) ++out[order[k]];
  return out;
}

DatasetManifest split_dataset(const DatasetManifest& m, const std::array<double, 3>& ratios, std::uint64_t seed,
                              std::vector<std::string>* warnings) {
  for (double r : ratios)
    if (!(r >= 0)) throw ConfigError("split_dataset: ratios must be non-negative");
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) throw ConfigError("split_dataset: ratios must sum to 1");

  DatasetManifest out = m;
  out.split_seed = seed;
  std::vector<std::vector<std::size_t>> groups;
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const auto it = std::find(labels.begin(), labels.end(), m.entries[i].label);
    if (it == labels.end()) {
      labels.push_back(m.entries[i].label);
      groups.push_back({i});
    } else {
      groups[static_cast<std::size_t>(it - labels.begin())].push_back(i);
    }
  }
  bool stratify = true;
  for (std::size_t g = 0; g < groups.size(); ++g)
    if (groups[g].size() < 3) {
      stratify = false;
      if (warnings)
        warnings->push_back("class '" + labels[g] + "' has " + std::to_string(groups[g].size()) +
                            " items; falling back to a global split");
    }
  if (!stratify) {
    std::vector<std::size_t> all(m.entries.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    groups = {all};
  }

  for (std::size_t g = 0; g < groups.size(); ++g) {
    auto& idx = groups[g];
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(g)};
    std::mt19937_64 rng(seq);
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto counts = split_counts(idx.size(), ratios);
    std::size_t k = 0;
    for (std::size_t s = 0; s < 3; ++s)
      for (std::size_t c = 0; c < counts[s]; ++c) out.entries[idx[k++]].split = static_cast<Split>(s + 1);
  }
  return out;
}

LabeledImages load_split(const DatasetManifest& m, const fs::path& base_dir, Split split) {
  LabeledImages out;
  for (const auto& e : m.entries) {
    if (split != Split::none && e.split != split) continue;
    out.images.push_back(load_image(base_dir / e.path));
    out.labels.push_back(m.label_index(e.label));
  }
  return out;
}

}  // namespace retisynth
