#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "retisynth/synth.hpp"

namespace retisynth {

enum class Split { none, train, val, test };
enum class Provenance { real, wgan, styletransfer };

std::string to_string(Split s);
std::string to_string(Provenance p);
Split parse_split(const std::string& s);
Provenance parse_provenance(const std::string& s);

struct ManifestEntry {
  std::string path;  // relative to the manifest's directory, or absolute
  std::string label;
  Modality modality = Modality::cfp;
  Split split = Split::none;
  Provenance provenance = Provenance::real;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::vector<std::string> classes = symptom_names();
  std::uint64_t split_seed = 0;

  int label_index(const std::string& label) const;
  std::size_t count(Split s) const;
};

/// CSV columns: path,label,modality,split,provenance,split_seed.
std::string manifest_csv(const DatasetManifest& m);
DatasetManifest parse_manifest(const std::string& csv);
DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& m, const std::filesystem::path& path);

/// Checks that every entry exists under `base_dir` and decodes.
void validate_manifest(const DatasetManifest& m, const std::filesystem::path& base_dir);

/// Renders n images into out_dir as <kind>_<modality>_<index>.pnm.
DatasetManifest synth_corpus(SymptomKind kind, Modality modality, std::size_t n, std::size_t img_size,
                             std::uint64_t seed, const std::filesystem::path& out_dir,
                             const RenderOptions& opts = {});

/// Per-class stratified shuffle (train, val, test) with largest-remainder
/// counts. Falls back to one global split, with a warning, when any class
/// has fewer than 3 items.
DatasetManifest split_dataset(const DatasetManifest& m, const std::array<double, 3>& ratios, std::uint64_t seed,
                              std::vector<std::string>* warnings = nullptr);

/// Largest-remainder allocation of n items over the ratios.
std::array<std::size_t, 3> split_counts(std::size_t n, const std::array<double, 3>& ratios);

/// Loads the entries of one split (Split::none selects all).
LabeledImages load_split(const DatasetManifest& m, const std::filesystem::path& base_dir, Split split);

}  // namespace retisynth
