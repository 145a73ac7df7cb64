#include "retisynth/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <sstream>

namespace retisynth {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::uint64_t combine(std::uint64_t a, std::uint64_t b) { return (a ^ b) * 1099511628211ull + (a >> 7); }

Tensor ones_like_batch(std::size_t n, float v) { return Tensor(Shape{n, 1}, v); }

[[noreturn]] void rethrow_at(const char* who, std::size_t step, const NumericError& e) {
  throw NumericError(std::string(who) + ": aborted at step " + std::to_string(step) + ": " + e.what());
}

// RAII restore of a network's norm mode.
class ModeScope {
 public:
  ModeScope(Network<float>& net, NormMode mode) : net_(net), saved_(net.mode()) { net.set_mode(mode); }
  ~ModeScope() { net_.set_mode(saved_); }
  ModeScope(const ModeScope&) = delete;
  ModeScope& operator=(const ModeScope&) = delete;

 private:
  Network<float>& net_;
  NormMode saved_;
};

}  // namespace

Tensor stack_images(const ImageList& images, std::span<const std::size_t> idx) {
  if (idx.empty()) throw ContractError("stack_images: empty selection");
  const Shape& s = images.at(idx[0]).shape();
  const std::size_t per = shape_numel(s);
  std::vector<float> out;
  out.reserve(per * idx.size());
  for (std::size_t i : idx) {
    const auto& img = images.at(i);
    if (img.shape() != s)
      throw DimensionError("stack_images: image " + std::to_string(i) + " has shape " + shape_str(img.shape()) +
                           ", expected " + shape_str(s));
    out.insert(out.end(), img.data().begin(), img.data().end());
  }
  Shape full{idx.size()};
  full.insert(full.end(), s.begin(), s.end());
  return Tensor(std::move(full), std::move(out));
}

Tensor stack_images(const ImageList& images) {
  std::vector<std::size_t> idx(images.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return stack_images(images, idx);
}

std::vector<double> TrainReport::series(const std::string& column) const {
  const auto it = std::find(columns.begin(), columns.end(), column);
  if (it == columns.end()) throw LookupError("TrainReport: no column '" + column + "'");
  const auto k = static_cast<std::size_t>(it - columns.begin());
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.at(k));
  return out;
}

std::string TrainReport::to_csv() const {
  std::ostringstream os;
  os << std::setprecision(9);
  for (std::size_t i = 0; i < columns.size(); ++i) os << (i ? "," : "") << columns[i];
  os << '\n';
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
    os << '\n';
  }
  return os.str();
}

BatchSampler::BatchSampler(std::size_t n, std::size_t batch, std::uint64_t seed)
    : n_(n), batch_(batch), pos_(n), order_(n), rng_(seed) {
  if (batch == 0 || batch > n)
    throw ConfigError("BatchSampler: batch size " + std::to_string(batch) + " with " + std::to_string(n) +
                      " items");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
}

std::vector<std::size_t> BatchSampler::next() {
  std::vector<std::size_t> out;
  out.reserve(batch_);
  while (out.size() < batch_) {
    if (pos_ == n_) {
      std::shuffle(order_.begin(), order_.end(), rng_);
      pos_ = 0;
    }
    out.push_back(order_[pos_++]);
  }
  return out;
}

// ---------------------------------------------------------------- GAN

GanState make_gan_state(Network<float>& g, Network<float>& d, const GanConfig& cfg) {
  OptimizerConfig og{cfg.optimizer, cfg.lr_g};
  OptimizerConfig od{cfg.optimizer, cfg.lr_d};
  og.beta1 = od.beta1 = cfg.beta1;
  return GanState{Optimizer<float>(og, g.parameters()), Optimizer<float>(od, d.parameters())};
}

GanStepResult gan_step(Network<float>& g, Network<float>& d, const Tensor& real, LatentSampler& sampler,
                       const GanConfig& cfg, GanState& state) {
  if (real.rank() != 4) throw DimensionError("gan_step: real batch must be N×C×H×W");
  const std::size_t n = real.dim(0);
  if (n < 2) throw ConfigError("gan_step: batch_size must be >= 2");
  for (float v : real.data())
    if (!(v >= -1.0f && v <= 1.0f)) throw ContractError("gan_step: real batch outside [-1,1]");

  GanStepResult r;
  const Tensor z = sampler.sample(n);
  try {
    Tensor fake;
    {
      NoGradGuard guard;
      fake = g(z);
    }
    d.zero_grad();
    const Tensor d_real = d(real);
    const Tensor d_fake = d(fake);
    const Tensor d_loss = add(bce(d_real, ones_like_batch(n, 1.0f)), bce(d_fake, ones_like_batch(n, 0.0f)));
    d_loss.backward();
    state.d_opt.step();
    d.zero_grad();
    r.d_loss = d_loss.item();
    r.d_real.assign(d_real.data().begin(), d_real.data().end());
    r.d_fake.assign(d_fake.data().begin(), d_fake.data().end());

    g.zero_grad();
    const Tensor out = d(g(z));
    const Tensor g_loss = cfg.saturating ? scale(bce(out, ones_like_batch(n, 0.0f)), -1.0f)
                                         : bce(out, ones_like_batch(n, 1.0f));
    g_loss.backward();
    state.g_opt.step();
    g.zero_grad();
    d.zero_grad();
    r.g_loss = g_loss.item();
  } catch (const NumericError& e) {
    rethrow_at("gan_step", state.step, e);
  }
  ++state.step;
  return r;
}

ImageList generate_images(Network<float>& g, std::size_t n, std::uint64_t seed, std::size_t batch_size) {
  if (n == 0 || batch_size == 0) throw ConfigError("generate_images: n and batch_size must be >= 1");
  if (g.input_shape().size() != 1) throw ConfigError("generate_images: not a latent-input generator");
  ModeScope scope(g, NormMode::eval);
  NoGradGuard guard;
  LatentSampler sampler(g.input_shape()[0], seed);
  ImageList out;
  while (out.size() < n) {
    const std::size_t b = std::min(batch_size, n - out.size());
    const Tensor y = g(sampler.sample(b));
    const Shape per(y.shape().begin() + 1, y.shape().end());
    const std::size_t step = shape_numel(per);
    for (std::size_t i = 0; i < b; ++i)
      out.emplace_back(per, std::vector<float>(y.data().begin() + static_cast<long>(i * step),
                                               y.data().begin() + static_cast<long>((i + 1) * step)));
  }
  return out;
}

TrainReport train_gan(Network<float>& g, Network<float>& d, const ImageList& real, const GanConfig& cfg) {
  if (cfg.batch_size < 2) throw ConfigError("train_gan: batch_size must be >= 2");
  const auto t0 = Clock::now();
  GanState state = make_gan_state(g, d, cfg);
  LatentSampler sampler(cfg.latent_dim, cfg.seed);
  BatchSampler batches(real.size(), cfg.batch_size, cfg.seed + 1);
  g.set_mode(NormMode::train);
  d.set_mode(NormMode::train);
  TrainReport rep;
  rep.columns = {"step", "d_loss", "g_loss"};
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    const auto idx = batches.next();
    const auto r = gan_step(g, d, stack_images(real, idx), sampler, cfg, state);
    rep.rows.push_back({static_cast<double>(s), r.d_loss, r.g_loss});
  }
  rep.wall_seconds = seconds_since(t0);
  rep.checksum = combine(g.checksum(), d.checksum());
  return rep;
}

// ---------------------------------------------------------------- WGAN

void validate(const WganConfig& cfg) {
  if (!(cfg.clip_c > 0)) throw ConfigError("wgan: clip_c must be > 0");
  if (cfg.n_critic < 1) throw ConfigError("wgan: n_critic must be >= 1");
  if (!(cfg.lr > 0)) throw ConfigError("wgan: lr must be > 0");
  if (cfg.batch_size < 2) throw ConfigError("wgan: batch_size must be >= 2");
}

WganState make_wgan_state(Network<float>& g, Network<float>& critic, const WganConfig& cfg) {
  validate(cfg);
  const OptimizerConfig oc{OptimizerKind::rmsprop, cfg.lr};
  return WganState{Optimizer<float>(oc, critic.parameters()), Optimizer<float>(oc, g.parameters())};
}

WganStepResult wgan_step(Network<float>& g, Network<float>& critic, const std::function<Tensor()>& next_real,
                         LatentSampler& sampler, const WganConfig& cfg, WganState& state) {
  validate(cfg);
  WganStepResult r;
  const auto params = critic.parameters();
  const float clip = static_cast<float>(cfg.clip_c);
  try {
    for (std::size_t k = 0; k < cfg.n_critic; ++k) {
      const Tensor real = next_real();
      Tensor fake;
      {
        NoGradGuard guard;
        fake = g(sampler.sample(real.dim(0)));
      }
      critic.zero_grad();
      const Tensor loss = sub(mean(critic(fake)), mean(critic(real)));
      loss.backward();
      state.c_opt.step();
      clamp_parameters(params, clip);
      r.critic_estimate = -static_cast<double>(loss.item());
    }
    critic.zero_grad();

    g.zero_grad();
    const Tensor g_loss = scale(mean(critic(g(sampler.sample(cfg.batch_size)))), -1.0f);
    g_loss.backward();
    state.g_opt.step();
    g.zero_grad();
    critic.zero_grad();
    r.g_loss = g_loss.item();
  } catch (const NumericError& e) {
    rethrow_at("wgan_step", state.step, e);
  }
  r.max_abs_critic = max_abs_parameter(params);
  ++state.step;
  return r;
}

WganStepResult wgan_step(Network<float>& g, Network<float>& critic, const Tensor& real, LatentSampler& sampler,
                         const WganConfig& cfg, WganState& state) {
  return wgan_step(g, critic, [&] { return real; }, sampler, cfg, state);
}

TrainReport train_wgan(Network<float>& g, Network<float>& critic, const ImageList& real, const WganConfig& cfg,
                       const WganObserver& observer) {
  const auto t0 = Clock::now();
  WganState state = make_wgan_state(g, critic, cfg);
  LatentSampler sampler(cfg.latent_dim, cfg.seed);
  BatchSampler batches(real.size(), cfg.batch_size, cfg.seed + 1);
  g.set_mode(NormMode::train);
  critic.set_mode(NormMode::train);
  auto next_real = [&] {
    const auto idx = batches.next();
    return stack_images(real, idx);
  };
  TrainReport rep;
  rep.columns = {"step", "critic_estimate", "g_loss", "max_abs_critic"};
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    const auto r = wgan_step(g, critic, next_real, sampler, cfg, state);
    rep.rows.push_back({static_cast<double>(s), r.critic_estimate, r.g_loss, static_cast<double>(r.max_abs_critic)});
    if (observer) observer(s, r);
  }
  rep.wall_seconds = seconds_since(t0);
  rep.checksum = combine(g.checksum(), critic.checksum());
  return rep;
}

// ---------------------------------------------------------------- augmentation

Tensor affine_augment(const Tensor& image, double prob, std::mt19937_64& rng, const AugmentParams& params) {
  if (!(prob >= 0.0 && prob <= 1.0)) throw ConfigError("affine_augment: prob must lie in [0,1]");
  if (image.rank() != 3) throw DimensionError("affine_augment: expected C×H×W, got " + shape_str(image.shape()));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (!(u(rng) < prob)) return image;

  const double theta = (2 * u(rng) - 1) * params.max_rotation_deg * std::numbers::pi / 180.0;
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  const double tx = (2 * u(rng) - 1) * params.max_translate * static_cast<double>(w);
  const double ty = (2 * u(rng) - 1) * params.max_translate * static_cast<double>(h);
  const bool flip = u(rng) < params.flip_prob;

  const double cx = (static_cast<double>(w) - 1) / 2, cy = (static_cast<double>(h) - 1) / 2;
  const double cs = std::cos(theta), sn = std::sin(theta);
  const auto src = image.data();
  std::vector<float> out(src.size(), 0.0f);
  auto pixel = [&](std::size_t ch, long y, long x) -> double {
    if (x < 0 || y < 0 || x >= static_cast<long>(w) || y >= static_cast<long>(h)) return 0.0;
    return src[(ch * h + static_cast<std::size_t>(y)) * w + static_cast<std::size_t>(x)];
  };
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      // inverse map: undo translation, then rotation, then flip
      const double dx = static_cast<double>(x) - cx - tx, dy = static_cast<double>(y) - cy - ty;
      double sx = cs * dx + sn * dy;
      const double sy = -sn * dx + cs * dy + cy;
      if (flip) sx = -sx;
      sx += cx;
      const double fx = std::floor(sx), fy = std::floor(sy);
      const double ax = sx - fx, ay = sy - fy;
      const long x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
      for (std::size_t ch = 0; ch < c; ++ch) {
        double v = 0;
        if (ax == 0 && ay == 0) {
          v = pixel(ch, y0, x0);
        } else {
          v = (1 - ay) * ((1 - ax) * pixel(ch, y0, x0) + ax * pixel(ch, y0, x0 + 1)) +
              ay * ((1 - ax) * pixel(ch, y0 + 1, x0) + ax * pixel(ch, y0 + 1, x0 + 1));
        }
        out[(ch * h + y) * w + x] = static_cast<float>(v);
      }
    }
  return Tensor(image.shape(), std::move(out));
}

// ---------------------------------------------------------------- classifier

double classifier_lr(const ClassifierTrainConfig& cfg, std::size_t epoch) {
  return 2 * epoch < cfg.epochs ? cfg.lr_high : cfg.lr_low;
}

std::vector<std::vector<double>> predict_proba(Network<float>& net, const ImageList& images, std::size_t batch_size) {
  ModeScope scope(net, NormMode::eval);
  NoGradGuard guard;
  std::vector<std::vector<double>> out;
  out.reserve(images.size());
  for (std::size_t start = 0; start < images.size(); start += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(images.size(), start + batch_size); ++i) idx.push_back(i);
    const Tensor p = softmax(net(stack_images(images, idx)));
    const std::size_t k = p.dim(1);
    for (std::size_t i = 0; i < idx.size(); ++i)
      out.emplace_back(p.data().begin() + static_cast<long>(i * k), p.data().begin() + static_cast<long>((i + 1) * k));
  }
  return out;
}

double accuracy(Network<float>& net, const LabeledImages& data) {
  if (data.size() == 0) throw ConfigError("accuracy: empty set");
  const auto probs = predict_proba(net, data.images);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const auto top = std::max_element(probs[i].begin(), probs[i].end()) - probs[i].begin();
    hit += top == data.labels[i];
  }
  return static_cast<double>(hit) / static_cast<double>(probs.size());
}

TrainReport train_classifier(Network<float>& net, const ClassifierData& data, const ClassifierTrainConfig& cfg) {
  if (cfg.epochs < 1) throw ConfigError("train_classifier: epochs must be >= 1");
  if (data.train.size() == 0) throw ConfigError("train_classifier: empty train split");
  if (data.val.size() == 0) throw ConfigError("train_classifier: empty val split");
  if (data.train.labels.size() != data.train.size() || data.val.labels.size() != data.val.size() ||
      data.test.labels.size() != data.test.size())
    throw ContractError("train_classifier: label count does not match image count");
  if (cfg.batch_size < 2) throw ConfigError("train_classifier: batch_size must be >= 2");
  if (!(cfg.augment_prob >= 0 && cfg.augment_prob <= 1))
    throw ConfigError("train_classifier: augment_prob must lie in [0,1]");

  const auto t0 = Clock::now();
  OptimizerConfig oc{OptimizerKind::adam, cfg.lr_high};
  Optimizer<float> opt(oc, net.parameters());
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainReport rep;
  rep.columns = {"epoch", "lr", "train_loss", "val_acc", "val_loss"};
  double best_acc = -1, best_loss = 0;
  std::size_t best_epoch = 0;
  Network<float> best = net;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = classifier_lr(cfg, epoch);
    opt.set_lr(lr);
    net.set_mode(NormMode::train);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      if (end - start < 2) break;
      ImageList imgs;
      std::vector<int> labels;
      for (std::size_t i = start; i < end; ++i) {
        imgs.push_back(affine_augment(data.train.images[order[i]], cfg.augment_prob, rng, cfg.augment));
        labels.push_back(data.train.labels[order[i]]);
      }
      try {
        net.zero_grad();
        const Tensor loss = softmax_xent(net(stack_images(imgs)), std::span<const int>(labels));
        loss.backward();
        opt.step();
        loss_sum += loss.item();
        ++batches;
      } catch (const NumericError& e) {
        rethrow_at("train_classifier", epoch, e);
      }
    }
    net.zero_grad();
    const auto probs = predict_proba(net, data.val.images);
    std::size_t correct = 0;
    double val_loss = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      const auto label = static_cast<std::size_t>(data.val.labels[i]);
      correct += static_cast<std::size_t>(std::max_element(probs[i].begin(), probs[i].end()) - probs[i].begin()) == label;
      val_loss -= std::log(std::max(probs[i][label], 1e-12)) / static_cast<double>(probs.size());
    }
    const double val_acc = static_cast<double>(correct) / static_cast<double>(probs.size());
    rep.rows.push_back({static_cast<double>(epoch), lr, batches ? loss_sum / static_cast<double>(batches) : 0.0,
                        val_acc, val_loss});
    if (val_acc > best_acc || (val_acc == best_acc && val_loss < best_loss)) {
      best_acc = val_acc;
      best_loss = val_loss;
      best_epoch = epoch;
      best = net;
    }
  }
  net = best;
  rep.summary["best_epoch"] = static_cast<double>(best_epoch);
  rep.summary["best_val_acc"] = best_acc;
  if (data.test.size() > 0) rep.summary["test_acc"] = accuracy(net, data.test);
  rep.wall_seconds = seconds_since(t0);
  rep.checksum = net.checksum();
  return rep;
}

// ---------------------------------------------------------------- autoencoder

double psnr(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size() || a.empty()) throw DimensionError("psnr: size mismatch");
  double se = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.size());
  return mse == 0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(4.0 / mse);
}

TrainReport train_autoencoder(Network<float>& encoder, Network<float>& decoder, const ImageList& train,
                              const ImageList& heldout, const AutoencoderConfig& cfg) {
  if (encoder.spec().kind != "encoder" || decoder.spec().kind != "decoder" ||
      encoder.spec().get("level") != decoder.spec().get("level"))
    throw ConfigError("train_autoencoder: encoder/decoder levels do not match");
  if (heldout.empty()) throw ConfigError("train_autoencoder: empty held-out set");
  const auto t0 = Clock::now();
  auto params = encoder.parameters();
  for (auto& p : decoder.parameters()) params.push_back(p);
  Optimizer<float> opt(OptimizerConfig{OptimizerKind::adam, cfg.lr}, params);
  BatchSampler batches(train.size(), std::min(cfg.batch_size, train.size()), cfg.seed);

  TrainReport rep;
  rep.columns = {"step", "loss"};
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    const auto idx = batches.next();
    const Tensor x = stack_images(train, idx);
    try {
      encoder.zero_grad();
      decoder.zero_grad();
      const Tensor loss = l2(decoder(encoder(x)), x);
      loss.backward();
      opt.step();
      rep.rows.push_back({static_cast<double>(s), static_cast<double>(loss.item())});
    } catch (const NumericError& e) {
      rethrow_at("train_autoencoder", s, e);
    }
  }
  encoder.zero_grad();
  decoder.zero_grad();

  NoGradGuard guard;
  double total = 0;
  for (std::size_t i = 0; i < heldout.size(); ++i) {
    const Tensor x = stack_images(heldout, std::span<const std::size_t>(&i, 1));
    total += psnr(decoder(encoder(x)).data(), x.data());
  }
  rep.summary["heldout_psnr"] = total / static_cast<double>(heldout.size());
  rep.wall_seconds = seconds_since(t0);
  rep.checksum = combine(encoder.checksum(), decoder.checksum());
  return rep;
}

}  // namespace retisynth
