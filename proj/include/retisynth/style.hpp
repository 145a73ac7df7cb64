#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "retisynth/builders.hpp"
#include "retisynth/linalg.hpp"
#include "retisynth/training.hpp"

namespace retisynth {

/// Encoder/decoder pairs for levels 1..4 (index 0 is level 1).
struct StylizerStack {
  std::vector<Network<float>> encoders;
  std::vector<Network<float>> decoders;
  double alpha = 1.0;
  linalg::WctParams wct;

  std::size_t levels() const { return encoders.size(); }
  std::size_t img_channels() const;
  /// Throws unless every pair maps a probe image back to its own shape and
  /// alpha lies in [0,1].
  void validate() const;
};

/// Fresh, untrained stack.
StylizerStack build_stack(std::size_t img_channels, std::uint64_t seed, std::size_t nominal_size = 64);

/// Trains each level pair as an autoencoder; one report per level.
std::vector<TrainReport> train_stack(StylizerStack& stack, const ImageList& train, const ImageList& heldout,
                                     const AutoencoderConfig& cfg);

/// (1,C,H,W) features -> C × HW.
linalg::FeatureMatrix to_features(const Tensor& f);
/// C × HW -> (1,C,H,W).
Tensor from_features(const linalg::FeatureMatrix& f, std::size_t h, std::size_t w);

/// Covariance of the level-k encoding of `image` (no regularization).
linalg::Matrix encoded_covariance(StylizerStack& stack, const Tensor& image, int level);

/// decode_k(wct(encode_k(content), encode_k(style), alpha)) clamped to
/// [-1,1]. Images are C×H×W or 1×C×H×W; the result has the content's rank.
Tensor stylize_single_level(const Tensor& content, const Tensor& style, int level, StylizerStack& stack);

/// Levels 4, 3, 2, 1 in turn, each re-encoding the current image against
/// the original style.
Tensor stylize(const Tensor& content, const Tensor& style, StylizerStack& stack);

struct NamedImage {
  std::string id;  // usually the source path
  Tensor image;
};

enum class Pairing { all_pairs, zip };
Pairing parse_pairing(const std::string& s);

struct StylizeRecord {
  std::string content_path;
  std::string style_path;
  std::string output_path;
  double alpha = 0;
  std::size_t levels = 0;
};

/// Stylizes every pair, writes out_dir/<n>.pnm plus out_dir/manifest.csv,
/// then checks that every listed output decodes.
std::vector<StylizeRecord> batch_stylize(const std::vector<NamedImage>& contents,
                                         const std::vector<NamedImage>& styles, Pairing pairing,
                                         StylizerStack& stack, const std::filesystem::path& out_dir);

std::string stylize_manifest_csv(const std::vector<StylizeRecord>& records);

}  // namespace retisynth
