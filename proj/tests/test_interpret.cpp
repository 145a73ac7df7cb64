#include <cmath>
#include <numeric>

#include "doctest.h"
#include "retisynth/builders.hpp"
#include "retisynth/interpret.hpp"
#include "retisynth/synth.hpp"

using namespace retisynth;

namespace {

// 1-channel 4×4 input -> final_conv (1×1 identity, or 2×2 stride 2 mean) -> gap -> linear.
Network<float> tiny_cam_net(std::size_t classes, bool downsample) {
  Network<float> net(NetSpec{"custom", {}}, {1, 4, 4});
  const std::size_t k = downsample ? 2 : 1;
  auto conv = std::make_unique<Conv2dLayer<float>>(1, 1, k, k, 0);
  for (auto& v : conv->weight.mutable_data()) v = 1.0f / static_cast<float>(k * k);
  conv->bias.mutable_data()[0] = 0.0f;
  net.add("final_conv", std::move(conv));
  net.add_tap("final_conv");
  net.add("gap", std::make_unique<PoolLayer<float>>(PoolKind::global_avg));
  auto head = std::make_unique<LinearLayer<float>>(1, classes);
  for (auto& v : head->weight.mutable_data()) v = 1.0f;
  for (auto& v : head->bias.mutable_data()) v = 0.0f;
  net.add("logits", std::move(head));
  return net;
}

LinearLayer<float>& head_of(Network<float>& net) {
  return dynamic_cast<LinearLayer<float>&>(net.layer(net.size() - 1));
}

Tensor ramp_image() {
  std::vector<float> v(16);
  for (std::size_t i = 0; i < 16; ++i) v[i] = static_cast<float>((i * 7) % 16) * 0.1f - 0.5f;
  return Tensor(Shape{1, 4, 4}, std::move(v));
}

// Classifier whose softmax is fixed by the head bias alone.
Network<float> constant_classifier(std::vector<float> bias) {
  auto net = build_classifier<float>({bias.size(), 32, 3, 4}, 1);
  auto& head = head_of(net);
  for (auto& v : head.weight.mutable_data()) v = 0.0f;
  std::copy(bias.begin(), bias.end(), head.bias.mutable_data().begin());
  return net;
}

}  // namespace

TEST_CASE("cam of a single identity feature map is the normalized map") {
  auto net = tiny_cam_net(2, false);
  CHECK(is_cam_compatible(net));
  const Tensor img = ramp_image();
  const auto cam = compute_cam(net, img, 0, "ramp");
  const auto [lo, hi] = std::minmax_element(img.data().begin(), img.data().end());
  REQUIRE(cam.height == 4);
  REQUIRE(cam.width == 4);
  for (std::size_t i = 0; i < 16; ++i)
    CHECK(cam.values[i] == doctest::Approx((img.data()[i] - *lo) / (*hi - *lo)).epsilon(1e-6));
  CHECK(*std::min_element(cam.values.begin(), cam.values.end()) == 0.0f);
  CHECK(*std::max_element(cam.values.begin(), cam.values.end()) == 1.0f);
  CHECK(cam.source_id == "ramp");
}

TEST_CASE("cam is nearest-upsampled to the image") {
  auto net = tiny_cam_net(2, true);
  std::vector<float> v(16, 0.0f);
  v[2] = v[3] = v[6] = v[7] = 1.0f;  // top-right block
  const auto cam = compute_cam(net, Tensor(Shape{1, 4, 4}, v), 1);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) CHECK(cam.at(y, x) == ((y < 2 && x >= 2) ? 1.0f : 0.0f));
  const auto [ay, ax] = cam.argmax();
  CHECK(quadrant_of(ay, ax, 4, 4) == 1);
}

TEST_CASE("constant feature maps give an all-zero cam") {
  auto net = tiny_cam_net(2, false);
  const auto cam = compute_cam(net, Tensor(Shape{1, 4, 4}, 0.3f), 0);
  for (float v : cam.values) CHECK(v == 0.0f);
}

TEST_CASE("cam is invariant to positive scaling of class weights") {
  auto net = build_classifier<float>({3, 32, 3, 4}, 2);
  const Tensor img = render_fundus(SymptomKind::ga, Modality::cfp, 32, 1, 0);
  const auto before = compute_cam(net, img, 1);
  auto& head = head_of(net);
  const std::size_t k = head.weight.dim(1);
  for (std::size_t c = 0; c < k; ++c) head.weight.mutable_data()[k + c] *= 3.0f;
  const auto after = compute_cam(net, img, 1);
  for (std::size_t i = 0; i < before.values.size(); ++i)
    CHECK(after.values[i] == doctest::Approx(before.values[i]).epsilon(1e-5));
  for (float v : after.values) CHECK((v >= 0.0f && v <= 1.0f));
  CHECK(after.height == 32);
}

TEST_CASE("cam contract errors") {
  auto d = build_discriminator<float>({32, 3, 8, DiscriminatorHead::sigmoid}, 0);
  const Tensor img(Shape{3, 32, 32}, 0.0f);
  CHECK_THROWS_AS(compute_cam(d, img, 0), ContractError);
  auto c = build_classifier<float>({3, 32, 3, 4}, 0);
  CHECK_THROWS_AS(compute_cam(c, img, 3), LabelError);
  CHECK_THROWS_AS(compute_cam(c, img, -1), LabelError);
}

TEST_CASE("quadrants and cam images") {
  CHECK(quadrant_of(0, 0, 64, 64) == 0);
  CHECK(quadrant_of(0, 32, 64, 64) == 1);
  CHECK(quadrant_of(32, 0, 64, 64) == 2);
  CHECK(quadrant_of(63, 63, 64, 64) == 3);
  auto net = tiny_cam_net(2, false);
  const auto cam = compute_cam(net, ramp_image(), 0);
  const Tensor g = cam_to_image(cam);
  CHECK(g.shape() == Shape{1, 4, 4});
  for (float v : g.data()) CHECK((v >= -1.0f && v <= 1.0f));
  CHECK(cam_overlay(ramp_image(), cam).shape() == Shape{3, 4, 4});
}

TEST_CASE("verify_images with fixed classifiers") {
  const ImageList imgs = synth_images(SymptomKind::drusen, Modality::cfp, 3, 32, 1);
  auto uniform = constant_classifier({0, 0, 0, 0});
  for (int c = 0; c < 4; ++c) CHECK(verify_images(uniform, imgs, c).mean_prob == doctest::Approx(0.25).epsilon(1e-6));

  auto seventy = constant_classifier({static_cast<float>(std::log(0.7 / 0.3)), 0.0f});
  const auto row = verify_images(seventy, ImageList{imgs[0]}, 0, "wgan", "drusen-CFP");
  CHECK(row.mean_prob == doctest::Approx(0.7).epsilon(1e-6));
  CHECK(row.count == 1);
  CHECK(row.top1_acc == 1.0);
  CHECK(row.top1_hist == std::vector<std::size_t>{1, 0});

  CHECK_THROWS_AS(verify_images(seventy, imgs, 2), LabelError);
  CHECK_THROWS_AS(verify_images(seventy, {}, 0), ConfigError);
}

TEST_CASE("verify_images is the mean of per-image probabilities") {
  auto net = build_classifier<float>({3, 32, 3, 4}, 9);
  auto imgs = synth_labeled(3, Modality::cfp, 32, 4).images;
  double sum = 0;
  for (const auto& img : imgs) sum += predict_proba(net, ImageList{img}).front()[1];
  const auto row = verify_images(net, imgs, 1);
  CHECK(row.mean_prob == doctest::Approx(sum / static_cast<double>(imgs.size())).epsilon(1e-6));
  CHECK(std::accumulate(row.top1_hist.begin(), row.top1_hist.end(), std::size_t{0}) == imgs.size());
  const auto csv = verification_csv({row});
  CHECK(csv.rfind("source,class_group,true_class,mean_prob,top1_acc,count\n", 0) == 0);
}

TEST_CASE("relation report ordering and normalization") {
  const ImageList imgs = synth_images(SymptomKind::drusen, Modality::cfp, 2, 32, 1);
  auto sure = constant_classifier({0.0f, 100.0f, 0.0f});
  const auto top = relation_report(sure, imgs, 1, symptom_names());
  REQUIRE(top.size() == 1);
  CHECK(top[0].class_idx == 1);
  CHECK(top[0].name == "ga");
  CHECK(top[0].mean_prob == doctest::Approx(1.0).epsilon(1e-9));

  auto uniform = constant_classifier({0, 0, 0, 0});
  const auto ties = relation_report(uniform, imgs, 10);
  REQUIRE(ties.size() == 4);
  for (int i = 0; i < 4; ++i) CHECK(ties[static_cast<std::size_t>(i)].class_idx == i);

  auto net = build_classifier<float>({5, 32, 3, 4}, 3);
  const auto full = relation_report(net, imgs, 5);
  double total = 0;
  std::vector<int> seen;
  for (std::size_t i = 0; i < full.size(); ++i) {
    total += full[i].mean_prob;
    seen.push_back(full[i].class_idx);
    if (i) CHECK(full[i - 1].mean_prob >= full[i].mean_prob);
  }
  CHECK(std::abs(total - 1.0) < 1e-6);
  std::sort(seen.begin(), seen.end());
  CHECK(seen == std::vector<int>{0, 1, 2, 3, 4});

  CHECK_THROWS_AS(relation_report(net, {}, 3), ConfigError);
}

TEST_CASE("sample size sweep contract and reproducibility") {
  const ImageList corpus = synth_images(SymptomKind::drusen, Modality::cfp, 200, 32, 2);
  auto clf = build_classifier<float>({3, 32, 3, 4}, 3);
  GanTrainer trainer = [](const ImageList& subset, std::uint64_t seed) {
    auto g = build_dcgan_generator<float>({8, 32, 3, 8}, seed);
    auto c = build_discriminator<float>({32, 3, 8, DiscriminatorHead::linear}, seed + 1);
    WganConfig cfg;
    cfg.latent_dim = 8;
    cfg.batch_size = 4;
    cfg.n_critic = 1;
    cfg.steps = 2;
    cfg.seed = seed;
    train_wgan(g, c, subset, cfg);
    return g;
  };
  SweepConfig cfg;
  cfg.samples = 8;
  cfg.seed = 5;
  const auto a = sample_size_sweep({50, 100, 200}, corpus, trainer, clf, cfg);
  REQUIRE(a.size() == 3);
  for (const auto& r : a) {
    CHECK((r.value >= 0.0 && r.value <= 1.0));
    CHECK((r.top3_other_mass >= 0.0 && r.top3_other_mass <= 1.0));
    CHECK(r.value + r.top3_other_mass == doctest::Approx(1.0).epsilon(1e-6));
  }
  const auto b = sample_size_sweep({50, 100, 200}, corpus, trainer, clf, cfg);
  CHECK(sweep_csv(a) == sweep_csv(b));
  const std::string csv = sweep_csv(a);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);

  CHECK_THROWS_AS(sample_size_sweep({50, 300}, corpus, trainer, clf, cfg), ConfigError);
  CHECK_THROWS_AS(sample_size_sweep({100, 50}, corpus, trainer, clf, cfg), ConfigError);
}
