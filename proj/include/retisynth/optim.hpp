#pragma once

#include <span>
#include <vector>

#include "retisynth/network.hpp"

namespace retisynth {

enum class OptimizerKind { sgd, rmsprop, adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 1e-3;
  double rho = 0.9;  // rmsprop decay
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerState {
  std::vector<double> m;  // adam first moment
  std::vector<double> v;  // rmsprop / adam second moment
  std::size_t t = 0;
};

/// In-place update of one parameter array.
///   sgd:     w -= lr g
///   rmsprop: s = rho s + (1-rho) g^2;  w -= lr g / sqrt(s + eps)
///   adam:    bias-corrected moments;   w -= lr m^ / (sqrt(v^) + eps)
template <typename T>
void optimizer_step(std::span<T> params, std::span<const T> grads, const OptimizerConfig& cfg, OptimizerState& state);

void validate(const OptimizerConfig& cfg);

/// Binds an optimizer to a network's parameter tensors. Parameters with no
/// gradient buffer are stepped with a zero gradient.
template <typename T>
class Optimizer {
 public:
  Optimizer(OptimizerConfig cfg, std::vector<NamedTensor<T>> params);

  void step();
  void set_lr(double lr);
  const OptimizerConfig& config() const { return cfg_; }
  std::size_t steps() const { return states_.empty() ? 0 : states_.front().t; }

 private:
  OptimizerConfig cfg_;
  std::vector<NamedTensor<T>> params_;
  std::vector<Shape> shapes_;
  std::vector<OptimizerState> states_;
};

/// Clamps every value of every tensor to [-c, c].
template <typename T>
void clamp_parameters(std::vector<NamedTensor<T>> params, T c);

template <typename T>
T max_abs_parameter(const std::vector<NamedTensor<T>>& params);

}  // namespace retisynth
