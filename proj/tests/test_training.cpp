#include <cmath>
#include <numeric>

#include "doctest.h"
#include "retisynth/builders.hpp"
#include "retisynth/synth.hpp"
#include "retisynth/training.hpp"
#include "toy_wgan.hpp"

using namespace retisynth;

namespace {

double mean_of(const std::vector<double>& v, std::size_t from, std::size_t to) {
  return std::accumulate(v.begin() + static_cast<long>(from), v.begin() + static_cast<long>(to), 0.0) /
         static_cast<double>(to - from);
}

// Clamped binary cross-entropy evaluated independently in double.
double bce_oracle(const std::vector<float>& p, double target) {
  double s = 0;
  for (float v : p) {
    const double c = std::clamp(static_cast<double>(v), 1e-7, 1 - 1e-7);
    s += -(target * std::log(c) + (1 - target) * std::log(1 - c));
  }
  return s / static_cast<double>(p.size());
}

ImageList small_real_batch(std::size_t n, std::size_t size) {
  return synth_images(SymptomKind::drusen, Modality::cfp, n, size, 3);
}

}  // namespace

TEST_CASE("sgd step") {
  std::vector<double> w{1.0};
  const std::vector<double> g{2.0};
  OptimizerState st;
  optimizer_step<double>(w, g, {OptimizerKind::sgd, 0.1}, st);
  CHECK(w[0] == doctest::Approx(0.8).epsilon(1e-15));

  std::vector<double> w2{1.5, -3.0};
  const std::vector<double> zero{0.0, 0.0};
  OptimizerState st2;
  optimizer_step<double>(w2, zero, {OptimizerKind::sgd, 0.1}, st2);
  CHECK(w2 == std::vector<double>{1.5, -3.0});
}

TEST_CASE("rmsprop first step magnitude") {
  const double lr = 0.01, rho = 0.9, eps = 1e-8, g = 2.0;
  // lr g / sqrt((1 - rho) g^2 + eps) recomputed from the update rule
  const double expected = lr * g / std::sqrt((1 - rho) * g * g + eps);
  CHECK(expected == doctest::Approx(0.0316227765).epsilon(1e-9));
  std::vector<double> w{0.0};
  const std::vector<double> grad{g};
  OptimizerState st;
  OptimizerConfig cfg{OptimizerKind::rmsprop, lr};
  optimizer_step<double>(w, grad, cfg, st);
  CHECK(-w[0] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("adam first step moves by lr") {
  std::vector<double> w{1.0};
  const std::vector<double> g{2.0};
  OptimizerState st;
  optimizer_step<double>(w, g, {OptimizerKind::adam, 0.1}, st);
  CHECK(w[0] == doctest::Approx(0.9).epsilon(1e-8));
}

TEST_CASE("optimizer contracts") {
  std::vector<double> w{1.0, 2.0};
  std::vector<double> g{1.0, 1.0};
  OptimizerState st;
  OptimizerConfig cfg{OptimizerKind::rmsprop, 0.1};
  optimizer_step<double>(w, g, cfg, st);
  std::vector<double> w3{1, 2, 3}, g3{1, 1, 1};
  CHECK_THROWS_AS(optimizer_step<double>(w3, g3, cfg, st), ContractError);
  CHECK_THROWS_AS(optimizer_step<double>(w3, g, cfg, st), ContractError);
  CHECK_THROWS_AS(validate(OptimizerConfig{OptimizerKind::sgd, 0.0}), ConfigError);
  CHECK_THROWS_AS(validate(OptimizerConfig{OptimizerKind::rmsprop, 0.1, 1.0}), ConfigError);
  CHECK_THROWS_AS(validate(WganConfig{0.0}), ConfigError);
  CHECK_THROWS_AS(validate(WganConfig{0.01, 0}), ConfigError);
}

TEST_CASE("gan_step with an indifferent discriminator") {
  auto g = build_dcgan_generator<float>({8, 32, 3, 8}, 1);
  auto d = build_discriminator<float>({32, 3, 8, DiscriminatorHead::sigmoid}, 2);
  for (auto& p : d.parameters())
    if (p.name.rfind("score.", 0) == 0)
      for (auto& v : p.tensor.mutable_data()) v = 0.0f;
  GanConfig cfg;
  cfg.latent_dim = 8;
  cfg.optimizer = OptimizerKind::sgd;
  cfg.lr_d = 1e-12;
  GanState state = make_gan_state(g, d, cfg);
  LatentSampler z(8, 3);
  const auto r = gan_step(g, d, stack_images(small_real_batch(4, 32)), z, cfg, state);
  CHECK(r.d_loss == doctest::Approx(2 * std::log(2.0)).epsilon(1e-6));
  CHECK(r.g_loss == doctest::Approx(std::log(2.0)).epsilon(1e-5));
}

TEST_CASE("perfect discriminator loss is near zero") {
  const Tensor64 real_out(Shape{2, 1}, 1.0), fake_out(Shape{2, 1}, 0.0);
  const double d_loss = add(bce(real_out, Tensor64(Shape{2, 1}, 1.0)), bce(fake_out, Tensor64(Shape{2, 1}, 0.0))).item();
  CHECK(d_loss == doctest::Approx(2e-7).epsilon(1e-6));
}

TEST_CASE("gan_step loss matches independent clamped bce and isolates networks") {
  auto g = build_dcgan_generator<float>({16, 32, 3, 8}, 4);
  auto d = build_discriminator<float>({32, 3, 8, DiscriminatorHead::sigmoid}, 5);
  auto c = build_classifier<float>({3, 32, 3, 8}, 6);
  const auto g0 = g.checksum(), d0 = d.checksum(), c0 = c.checksum();
  GanConfig cfg;
  cfg.latent_dim = 16;
  GanState state = make_gan_state(g, d, cfg);
  LatentSampler z(16, 7);
  const Tensor real = stack_images(small_real_batch(6, 32));
  for (int i = 0; i < 3; ++i) {
    const auto r = gan_step(g, d, real, z, cfg, state);
    const double oracle = bce_oracle(r.d_real, 1.0) + bce_oracle(r.d_fake, 0.0);
    CHECK(std::abs(r.d_loss - oracle) < 1e-6);
  }
  CHECK(g.checksum() != g0);
  CHECK(d.checksum() != d0);
  CHECK(c.checksum() == c0);

  CHECK_THROWS_AS(gan_step(g, d, Tensor(Shape{4, 3, 32, 32}, 2.0f), z, cfg, state), ContractError);
  CHECK_THROWS_AS(gan_step(g, d, Tensor(Shape{1, 3, 32, 32}, 0.0f), z, cfg, state), ConfigError);
}

TEST_CASE("gan step aborts on non-finite values") {
  auto g = build_dcgan_generator<float>({8, 32, 3, 8}, 1);
  auto d = build_discriminator<float>({32, 3, 8, DiscriminatorHead::sigmoid}, 2);
  d.parameters().front().tensor.mutable_data()[0] = std::numeric_limits<float>::infinity();
  GanConfig cfg;
  cfg.latent_dim = 8;
  GanState state = make_gan_state(g, d, cfg);
  LatentSampler z(8, 3);
  CHECK_THROWS_AS(gan_step(g, d, stack_images(small_real_batch(4, 32)), z, cfg, state), NumericError);
}

TEST_CASE("clamp contract") {
  auto t = Tensor::parameter(Shape{3}, {0.03f, -0.5f, 0.004f});
  clamp_parameters<float>({{"w", t}}, 0.01f);
  CHECK(t.data()[0] == 0.01f);
  CHECK(t.data()[1] == -0.01f);
  CHECK(t.data()[2] == 0.004f);
}

TEST_CASE("wgan_step keeps every critic parameter within clip") {
  auto g = build_dcgan_generator<float>({16, 32, 3, 8}, 1);
  auto critic = build_discriminator<float>({32, 3, 8, DiscriminatorHead::linear}, 2);
  auto c = build_classifier<float>({3, 32, 3, 8}, 6);
  const auto c0 = c.checksum();
  WganConfig cfg;
  cfg.latent_dim = 16;
  cfg.batch_size = 4;
  cfg.n_critic = 2;
  WganState state = make_wgan_state(g, critic, cfg);
  LatentSampler z(16, 3);
  const Tensor real = stack_images(small_real_batch(4, 32));
  for (int i = 0; i < 4; ++i) {
    const auto r = wgan_step(g, critic, real, z, cfg, state);
    CHECK(r.max_abs_critic <= 0.01f);
    CHECK(max_abs_parameter(critic.parameters()) <= 0.01f);
    CHECK(std::isfinite(r.critic_estimate));
  }
  CHECK(c.checksum() == c0);
}

TEST_CASE("toy 1-D WGAN moves the generator to the real mean") {
  const auto run = run_toy_wgan(200, 0.02, 0);
  CHECK(std::abs(run.gen_mean.back() - 1.0) < 0.2);
  CHECK(mean_of(run.estimate, 180, 200) < mean_of(run.estimate, 0, 20));
  for (float m : run.max_abs_critic) CHECK(m <= 0.01f);
}

TEST_CASE("affine_augment contract") {
  const Tensor img = render_fundus(SymptomKind::ga, Modality::cfp, 32, 1, 0);
  std::mt19937_64 rng(5);

  const Tensor same = affine_augment(img, 0.0, rng);
  CHECK(std::equal(img.data().begin(), img.data().end(), same.data().begin()));

  const Tensor near = affine_augment(img, 1.0, rng, AugmentParams{0, 0, 0});
  for (std::size_t i = 0; i < img.numel(); ++i) CHECK(std::abs(near.data()[i] - img.data()[i]) < 1e-6);

  const Tensor mirrored = affine_augment(img, 1.0, rng, AugmentParams{0, 0, 1.0});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 32; ++y)
      for (std::size_t x = 0; x < 32; ++x) CHECK(mirrored.at({c, y, x}) == img.at({c, y, 31 - x}));

  for (int i = 0; i < 20; ++i) {
    const Tensor a = affine_augment(img, 1.0, rng);
    CHECK(a.shape() == img.shape());
    for (float v : a.data()) CHECK((v >= -1.0f && v <= 1.0f));
  }
  CHECK_THROWS_AS(affine_augment(img, 1.5, rng), ConfigError);
}

TEST_CASE("classifier lr schedule") {
  ClassifierTrainConfig cfg;
  cfg.epochs = 400;
  CHECK(classifier_lr(cfg, 0) == 1e-4);
  CHECK(classifier_lr(cfg, 199) == 1e-4);
  CHECK(classifier_lr(cfg, 200) == 1e-5);
  CHECK(classifier_lr(cfg, 399) == 1e-5);
  cfg.epochs = 5;
  CHECK(classifier_lr(cfg, 2) == 1e-4);
  CHECK(classifier_lr(cfg, 3) == 1e-5);
}

namespace {

// Two classes separated by a global brightness offset.
LabeledImages separable(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> noise(0.0f, 0.2f);
  LabeledImages out;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    std::vector<float> v(32 * 32);
    for (auto& x : v) x = std::clamp((label ? 0.3f : -0.3f) + noise(rng), -1.0f, 1.0f);
    out.images.emplace_back(Shape{1, 32, 32}, std::move(v));
    out.labels.push_back(label);
  }
  return out;
}

}  // namespace

TEST_CASE("classifier learns a separable two-class set") {
  ClassifierData data{separable(80, 1), separable(20, 2), separable(40, 3)};
  auto net = build_classifier<float>({2, 32, 1, 4}, 9);
  ClassifierTrainConfig cfg;
  cfg.epochs = 20;
  cfg.seed = 4;
  const auto rep = train_classifier(net, data, cfg);
  CHECK(rep.rows.size() == 20);
  CHECK(rep.summary.at("test_acc") >= 0.95);
  CHECK(accuracy(net, data.val) == doctest::Approx(rep.summary.at("best_val_acc")));
}

TEST_CASE("classifier training is deterministic without augmentation") {
  ClassifierData data{separable(24, 1), separable(8, 2), {}};
  ClassifierTrainConfig cfg;
  cfg.epochs = 3;
  cfg.augment_prob = 0;
  cfg.seed = 8;
  auto a = build_classifier<float>({2, 32, 1, 4}, 9);
  auto b = build_classifier<float>({2, 32, 1, 4}, 9);
  const auto ra = train_classifier(a, data, cfg);
  const auto rb = train_classifier(b, data, cfg);
  CHECK(ra.series("train_loss") == rb.series("train_loss"));
  CHECK(ra.checksum == rb.checksum);

  CHECK_THROWS_AS(train_classifier(a, ClassifierData{separable(4, 1), {}, {}}, cfg), ConfigError);
  CHECK_THROWS_AS(train_classifier(a, ClassifierData{{}, separable(4, 1), {}}, cfg), ConfigError);
}

TEST_CASE("autoencoder determinism and sanity") {
  const auto imgs = synth_labeled(4, Modality::cfp, 32, 1).images;
  const ImageList train(imgs.begin(), imgs.begin() + 10), held(imgs.begin() + 10, imgs.end());
  AutoencoderConfig cfg;
  cfg.steps = 30;
  cfg.batch_size = 4;
  auto run = [&] {
    auto e = build_encoder<float>(2, 3, 1, 32);
    auto d = build_decoder<float>(2, 3, 2, 32);
    return train_autoencoder(e, d, train, held, cfg);
  };
  const auto a = run(), b = run();
  const auto la = a.series("loss");
  CHECK(la == b.series("loss"));
  for (double v : la) CHECK(std::isfinite(v));
  CHECK(la.back() < la.front());

  auto e = build_encoder<float>(2, 3, 1, 32);
  auto d = build_decoder<float>(1, 3, 2, 32);
  CHECK_THROWS_AS(train_autoencoder(e, d, train, held, cfg), ConfigError);
}

TEST_CASE("level-1 autoencoder reaches 25 dB on held-out synthetic images") {
  const auto all = synth_labeled(67, Modality::cfp, 64, 11).images;  // 201 images
  ImageList train, held;
  for (std::size_t i = 0; i < 200; ++i) (i % 10 == 0 ? held : train).push_back(all[i]);
  auto e = build_encoder<float>(1, 3, 1);
  auto d = build_decoder<float>(1, 3, 2);
  AutoencoderConfig cfg;
  cfg.steps = 2000;
  const auto rep = train_autoencoder(e, d, train, held, cfg);
  MESSAGE("level-1 held-out PSNR " << rep.summary.at("heldout_psnr") << " dB in " << rep.wall_seconds << " s");
  CHECK(rep.summary.at("heldout_psnr") >= 25.0);
}
