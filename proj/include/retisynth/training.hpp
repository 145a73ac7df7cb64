#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "retisynth/optim.hpp"

namespace retisynth {

/// Images of identical shape C×H×W.
using ImageList = std::vector<Tensor>;

struct LabeledImages {
  ImageList images;
  std::vector<int> labels;
  std::size_t size() const { return images.size(); }
};

/// Stacks the selected images into N×C×H×W.
Tensor stack_images(const ImageList& images, std::span<const std::size_t> idx);
Tensor stack_images(const ImageList& images);

struct TrainReport {
  std::vector<std::string> columns;  // first column indexes the row (step or epoch)
  std::vector<std::vector<double>> rows;
  double wall_seconds = 0;
  std::uint64_t checksum = 0;
  std::map<std::string, double> summary;

  std::vector<double> series(const std::string& column) const;
  std::string to_csv() const;
};

/// Reshuffles once per pass; every index appears once per pass.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::size_t batch, std::uint64_t seed);
  std::vector<std::size_t> next();

 private:
  std::size_t n_, batch_, pos_;
  std::vector<std::size_t> order_;
  std::mt19937_64 rng_;
};

// ---- adversarial training ----

struct GanConfig {
  std::size_t batch_size = 16;
  std::size_t latent_dim = 100;
  double lr_g = 2e-4;
  double lr_d = 2e-4;
  OptimizerKind optimizer = OptimizerKind::adam;
  double beta1 = 0.5;
  std::size_t steps = 1000;
  std::uint64_t seed = 0;
  bool saturating = false;  // minimize log(1 - D(G(z))) instead of -log D(G(z))
};

struct GanState {
  Optimizer<float> g_opt;
  Optimizer<float> d_opt;
  std::size_t step = 0;
};

GanState make_gan_state(Network<float>& g, Network<float>& d, const GanConfig& cfg);

struct GanStepResult {
  double d_loss = 0;
  double g_loss = 0;
  std::vector<float> d_real;  // D outputs used for d_loss
  std::vector<float> d_fake;
};

/// One discriminator update on (real, G(z)) then one generator update.
GanStepResult gan_step(Network<float>& g, Network<float>& d, const Tensor& real, LatentSampler& sampler,
                       const GanConfig& cfg, GanState& state);

/// n samples from G in eval mode, each C×H×W.
ImageList generate_images(Network<float>& g, std::size_t n, std::uint64_t seed, std::size_t batch_size = 16);

TrainReport train_gan(Network<float>& g, Network<float>& d, const ImageList& real, const GanConfig& cfg);

struct WganConfig {
  double clip_c = 0.01;
  std::size_t n_critic = 5;
  double lr = 5e-5;
  std::size_t batch_size = 16;
  std::size_t latent_dim = 100;
  std::size_t steps = 1000;
  std::uint64_t seed = 0;
};

void validate(const WganConfig& cfg);

struct WganState {
  Optimizer<float> c_opt;
  Optimizer<float> g_opt;
  std::size_t step = 0;
};

WganState make_wgan_state(Network<float>& g, Network<float>& critic, const WganConfig& cfg);

struct WganStepResult {
  double critic_estimate = 0;  // mean C(x) - mean C(G(z)), last critic pass
  double g_loss = 0;
  float max_abs_critic = 0;  // after clamping
};

/// n_critic clipped critic updates, each on a fresh batch from `next_real`,
/// then one generator update.
WganStepResult wgan_step(Network<float>& g, Network<float>& critic, const std::function<Tensor()>& next_real,
                         LatentSampler& sampler, const WganConfig& cfg, WganState& state);
WganStepResult wgan_step(Network<float>& g, Network<float>& critic, const Tensor& real, LatentSampler& sampler,
                         const WganConfig& cfg, WganState& state);

using WganObserver = std::function<void(std::size_t step, const WganStepResult&)>;

TrainReport train_wgan(Network<float>& g, Network<float>& critic, const ImageList& real, const WganConfig& cfg,
                       const WganObserver& observer = {});

// ---- classifier ----

struct AugmentParams {
  double max_rotation_deg = 15.0;
  double max_translate = 0.1;  // fraction of width / height
  double flip_prob = 0.5;
};

/// With probability `prob`: random rotation, translation and horizontal flip
/// about the image centre, bilinear resampling, zero outside. Otherwise the
/// input is returned unchanged. Accepts C×H×W.
Tensor affine_augment(const Tensor& image, double prob, std::mt19937_64& rng, const AugmentParams& params = {});

struct ClassifierData {
  LabeledImages train, val, test;
};

struct ClassifierTrainConfig {
  std::size_t epochs = 40;
  std::size_t batch_size = 16;
  double lr_high = 1e-4;
  double lr_low = 1e-5;
  double augment_prob = 0.7;
  AugmentParams augment;
  std::uint64_t seed = 0;
};

/// lr_high while epoch < epochs/2, lr_low afterwards.
double classifier_lr(const ClassifierTrainConfig& cfg, std::size_t epoch);

/// Adam on softmax cross-entropy. Leaves `net` holding the weights of the
/// epoch with the best validation accuracy, ties going to the lower
/// validation cross-entropy.
/// Columns: epoch, lr, train_loss, val_acc, val_loss. Summary: best_epoch,
/// best_val_acc, test_acc.
TrainReport train_classifier(Network<float>& net, const ClassifierData& data, const ClassifierTrainConfig& cfg);

/// Softmax probabilities in eval mode, one row per image.
std::vector<std::vector<double>> predict_proba(Network<float>& net, const ImageList& images,
                                               std::size_t batch_size = 32);
double accuracy(Network<float>& net, const LabeledImages& data);

// ---- autoencoder ----

struct AutoencoderConfig {
  std::size_t steps = 2000;
  std::size_t batch_size = 8;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

/// 10 log10(4 / mse) for images in [-1, 1].
double psnr(std::span<const float> a, std::span<const float> b);

/// Joint Adam training of a matched encoder/decoder pair on l2
/// reconstruction. Columns: step, loss. Summary: heldout_psnr.
TrainReport train_autoencoder(Network<float>& encoder, Network<float>& decoder, const ImageList& train,
                              const ImageList& heldout, const AutoencoderConfig& cfg);

}  // namespace retisynth
