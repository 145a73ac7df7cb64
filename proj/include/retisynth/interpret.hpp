#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "retisynth/training.hpp"

namespace retisynth {

/// Per-class relevance over the image grid, values in [0,1].
struct CamMap {
  std::size_t height = 0, width = 0;
  std::vector<float> values;  // row-major
  int class_idx = 0;
  std::string source_id;

  float at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
  /// Row-major position of the first maximum.
  std::pair<std::size_t, std::size_t> argmax() const;
};

/// sum_k w[class,k] f_k over the "final_conv" tap, min-max normalized
/// (all zeros if the raw map is constant), nearest-upsampled to the image.
CamMap compute_cam(Network<float>& classifier, const Tensor& image, int class_idx, std::string source_id = {});

/// 0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right.
int quadrant_of(std::size_t y, std::size_t x, std::size_t height, std::size_t width);

/// CamMap as a 1×H×W image in [-1,1].
Tensor cam_to_image(const CamMap& cam);
/// Image blended with a red ramp of the map, 3×H×W.
Tensor cam_overlay(const Tensor& image, const CamMap& cam);

struct VerificationRow {
  std::string source;       // real | wgan | styletransfer
  std::string class_group;  // e.g. drusen-CFP
  int true_class = 0;
  double mean_prob = 0;  // mean softmax probability of the true class
  double top1_acc = 0;
  std::size_t count = 0;
  std::vector<std::size_t> top1_hist;  // per class
};

VerificationRow verify_images(Network<float>& classifier, const ImageList& images, int true_class,
                              std::string source = "real", std::string class_group = {});

std::string verification_csv(const std::vector<VerificationRow>& rows);

struct RelationEntry {
  int class_idx = 0;
  std::string name;
  double mean_prob = 0;
};

/// Mean softmax probability per class over the set, descending with ties
/// by ascending class index, truncated to top_n.
std::vector<RelationEntry> relation_report(Network<float>& classifier, const ImageList& images, std::size_t top_n,
                                           const std::vector<std::string>& class_names = {});

std::string relation_csv(const std::vector<RelationEntry>& entries);

struct SweepRow {
  std::size_t size = 0;
  double value = 0;           // verify_images mean probability
  double top3_other_mass = 0;  // mass on the three likeliest wrong classes
};

/// Trains a generator on `subset` with the given seed.
using GanTrainer = std::function<Network<float>(const ImageList& subset, std::uint64_t seed)>;

struct SweepConfig {
  int true_class = 0;
  std::size_t samples = 64;  // generated per size
  std::uint64_t seed = 0;
};

std::vector<SweepRow> sample_size_sweep(const std::vector<std::size_t>& sizes, const ImageList& corpus,
                                        const GanTrainer& train_gan_fn, Network<float>& classifier,
                                        const SweepConfig& cfg);

std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace retisynth
