#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "retisynth/ops.hpp"

namespace retisynth {

template <typename T>
struct NamedTensor {
  std::string name;
  BasicTensor<T> tensor;
};

// Non-trainable state (batchnorm running statistics).
template <typename T>
struct BufferRef {
  std::string name;
  std::vector<T>* values;
};

enum class InitScheme {
  dcgan,  // normal(0, 0.02)
  he,     // normal(0, sqrt(2 / fan_in))
};

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string kind() const = 0;
  /// Per-sample output shape for a per-sample input shape; throws on mismatch.
  virtual Shape output_shape(const Shape& in) const = 0;
  virtual BasicTensor<T> forward(const BasicTensor<T>& x, NormMode mode) = 0;
  virtual std::vector<NamedTensor<T>> parameters() const { return {}; }
  virtual std::vector<BufferRef<T>> buffers() { return {}; }
  virtual std::unique_ptr<Layer> clone() const = 0;
  virtual void initialize(std::mt19937_64&, InitScheme) {}
};

template <typename T>
class LinearLayer : public Layer<T> {
 public:
  LinearLayer(std::size_t in, std::size_t out);
  std::string kind() const override { return "linear"; }
  Shape output_shape(const Shape& in) const override;
  BasicTensor<T> forward(const BasicTensor<T>& x, NormMode) override { return linear(x, weight, bias); }
  std::vector<NamedTensor<T>> parameters() const override { return {{"weight", weight}, {"bias", bias}}; }
  std::unique_ptr<Layer<T>> clone() const override;
  void initialize(std::mt19937_64& rng, InitScheme scheme) override;

  BasicTensor<T> weight;  // out × in
  BasicTensor<T> bias;
};

template <typename T>
class Conv2dLayer : public Layer<T> {
 public:
  Conv2dLayer(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, std::size_t pad);
  std::string kind() const override { return "conv2d"; }
  Shape output_shape(const Shape& in) const override;
  BasicTensor<T> forward(const BasicTensor<T>& x, NormMode) override {
    return conv2d(x, weight, bias, stride, pad);
  }
  std::vector<NamedTensor<T>> parameters() const override { return {{"weight", weight}, {"bias", bias}}; }
  std::unique_ptr<Layer<T>> clone() const override;
  void initialize(std::mt19937_64& rng, InitScheme scheme) override;

  BasicTensor<T> weight;  // OIHW
  BasicTensor<T> bias;
  std::size_t stride, pad;
};

template <typename T>
class ConvTranspose2dLayer : public Layer<T> {
 public:
  ConvTranspose2dLayer(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, std::size_t pad);
  std::string kind() const override { return "conv_transpose2d"; }
  Shape output_shape(const Shape& in) const override;
  BasicTensor<T> forward(const BasicTensor<T>& x, NormMode) override {
    return conv_transpose2d(x, weight, bias, stride, pad);
  }
  std::vector<NamedTensor<T>> parameters() const override { return {{"weight", weight}, {"bias", bias}}; }
  std::unique_ptr<Layer<T>> clone() const override;
  void initialize(std::mt19937_64& rng, InitScheme scheme) override;

  BasicTensor<T> weight;  // IOHW
  BasicTensor<T> bias;
  std::size_t stride, pad;
};

template <typename T>
class BatchNormLayer : public Layer<T> {
 public:
  explicit BatchNormLayer(std::size_t channels, T momentum = T(0.1), T eps = T(1e-5));
  std::string kind() const override { return "batchnorm2d"; }
  Shape output_shape(const Shape& in) const override;
  BasicTensor<T> forward(const BasicTensor<T>& x, NormMode mode) override {
    return batchnorm2d(x, gamma, beta, stats, mode, momentum, eps);
  }
  std::vector<NamedTensor<T>> parameters() const override { return {{"gamma", gamma}, {"beta", beta}}; }
  std::vector<BufferRef<T>> buffers() override {
    return {{"running_mean", &stats.running_mean}, {"running_var", &stats.running_var}};
  }
  std::unique_ptr<Layer<T>> clone() const override;
  void initialize(std::mt19937_64& rng, InitScheme scheme) override;

  BasicTensor<T> gamma;
  BasicTensor<T> beta;
  BatchNormStats<T> stats;
  T momentum, eps;
};

template <typename T>
class ActivationLayer : public Layer<T> {
 public:
  explicit ActivationLayer(Activation act) : act(act) {}
  std::string kind() const override;
  Shape output_shape(const Shape& in) const override { return in; }
  BasicTensor<T> forward(const BasicTensor<T>& x, NormMode) override { return activation(x, act); }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<ActivationLayer>(*this); }

  Activation act;
};

template <typename T>
class PoolLayer : public Layer<T> {
 public:
  explicit PoolLayer(PoolKind kind) : pool(kind) {}
  std::string kind() const override;
  Shape output_shape(const Shape& in) const override;
  BasicTensor<T> forward(const BasicTensor<T>& x, NormMode) override { return pool_and_resize(x, pool); }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<PoolLayer>(*this); }

  PoolKind pool;
};

/// Reshapes each sample to `target` (flatten when target has one axis).
template <typename T>
class ReshapeLayer : public Layer<T> {
 public:
  explicit ReshapeLayer(Shape target) : target(std::move(target)) {}
  std::string kind() const override { return "reshape"; }
  Shape output_shape(const Shape& in) const override;
  BasicTensor<T> forward(const BasicTensor<T>& x, NormMode) override;
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<ReshapeLayer>(*this); }

  Shape target;
};

template <typename T>
struct ForwardResult {
  BasicTensor<T> output;
  std::map<std::string, BasicTensor<T>> taps;
};

/// Builder arguments kept with a network so checkpoints can rebuild it.
struct NetSpec {
  std::string kind;
  std::map<std::string, std::string> args;

  std::string get(const std::string& key) const;
  long get_int(const std::string& key) const;
};

/// Ordered layer stack with named taps on intermediate outputs.
template <typename T>
class Network {
 public:
  Network(NetSpec spec, Shape input_shape);
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  /// Appends a layer after checking that its input matches the current
  /// output shape.
  void add(std::string name, std::unique_ptr<Layer<T>> layer);
  /// Names the output of the most recently added layer.
  void add_tap(const std::string& tap);

  ForwardResult<T> forward(const BasicTensor<T>& x, std::span<const std::string> want_taps = {});
  BasicTensor<T> operator()(const BasicTensor<T>& x) { return forward(x).output; }

  std::vector<NamedTensor<T>> parameters() const;
  std::vector<BufferRef<T>> buffers();
  std::size_t parameter_count() const;
  /// FNV-1a over every parameter's bytes, in layer order.
  std::uint64_t checksum() const;
  void zero_grad();
  void initialize(std::uint64_t seed, InitScheme scheme);

  /// Fully convolutional nets accept any H,W; only the channel axis of
  /// input_shape() is enforced and its spatial dims are nominal.
  void set_spatially_flexible(bool on) { flexible_ = on; }
  bool spatially_flexible() const { return flexible_; }

  void set_mode(NormMode mode) { mode_ = mode; }
  NormMode mode() const { return mode_; }

  const NetSpec& spec() const { return spec_; }
  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const { return current_shape_; }
  std::size_t size() const { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return *layers_.at(i); }
  const Layer<T>& layer(std::size_t i) const { return *layers_.at(i); }
  const std::string& layer_name(std::size_t i) const { return names_.at(i); }
  bool has_tap(const std::string& tap) const { return taps_.count(tap) > 0; }
  /// Index of the layer whose output the tap exposes.
  std::size_t tap_index(const std::string& tap) const;

  /// One-sample forward/backward in eval mode; leaves grads zeroed.
  void smoke_test();

 private:
  NetSpec spec_;
  Shape input_shape_;
  Shape current_shape_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  std::vector<std::string> names_;
  std::map<std::string, std::size_t> taps_;
  NormMode mode_ = NormMode::train;
  bool flexible_ = false;
};

/// z ~ N(0, I) of shape N×dim.
class LatentSampler {
 public:
  explicit LatentSampler(std::size_t dim = 100, std::uint64_t seed = 0) : dim_(dim), rng_(seed) {}
  template <typename T = float>
  BasicTensor<T> sample(std::size_t n);
  std::size_t dim() const { return dim_; }

 private:
  std::size_t dim_;
  std::mt19937_64 rng_;
};

template <typename T>
BasicTensor<T> LatentSampler::sample(std::size_t n) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<T> v(n * dim_);
  for (auto& x : v) x = static_cast<T>(dist(rng_));
  return BasicTensor<T>(Shape{n, dim_}, std::move(v));
}

}  // namespace retisynth
