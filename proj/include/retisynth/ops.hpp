#pragma once

#include <span>
#include <vector>

#include "retisynth/tensor.hpp"

namespace retisynth {

// Elementwise arithmetic. No broadcasting: shapes must match exactly.
template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor);

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& a);
template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& a);

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& a, Shape shape);

/// x: N×in, weight: out×in, bias: out.
template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias);

/// input NCHW, weight OIHW, bias O. Zero padding.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                      std::size_t stride, std::size_t pad);

/// input NCHW, weight IOHW. Output side = (in - 1) * stride - 2 * pad + kernel.
/// Forward is the input-gradient operator of conv2d with the same weight.
template <typename T>
BasicTensor<T> conv_transpose2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                                const BasicTensor<T>& bias, std::size_t stride, std::size_t pad);

enum class NormMode { train, eval };

template <typename T>
struct BatchNormStats {
  std::vector<T> running_mean;
  std::vector<T> running_var;

  explicit BatchNormStats(std::size_t channels = 0)
      : running_mean(channels, T(0)), running_var(channels, T(1)) {}
};

/// Per-channel normalization over N·H·W (input NCHW or N×C). Train mode
/// uses batch moments and updates `stats` by EMA with `momentum`; eval mode
/// reads `stats`.
template <typename T>
BasicTensor<T> batchnorm2d(const BasicTensor<T>& input, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                           BatchNormStats<T>& stats, NormMode mode, T momentum, T eps);

enum class ActivationKind { relu, leaky_relu, tanh, sigmoid };

struct Activation {
  ActivationKind kind = ActivationKind::relu;
  double slope = 0.2;  // leaky_relu only
};

template <typename T>
BasicTensor<T> activation(const BasicTensor<T>& input, Activation act);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) { return activation(x, {ActivationKind::relu}); }
template <typename T>
BasicTensor<T> leaky_relu(const BasicTensor<T>& x, double slope) {
  return activation(x, {ActivationKind::leaky_relu, slope});
}
template <typename T>
BasicTensor<T> tanh(const BasicTensor<T>& x) { return activation(x, {ActivationKind::tanh}); }
template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) { return activation(x, {ActivationKind::sigmoid}); }

enum class PoolKind { avg_pool2, global_avg, nearest_upsample2 };

template <typename T>
BasicTensor<T> pool_and_resize(const BasicTensor<T>& input, PoolKind kind);

template <typename T>
BasicTensor<T> avg_pool2(const BasicTensor<T>& x) { return pool_and_resize(x, PoolKind::avg_pool2); }
template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x) { return pool_and_resize(x, PoolKind::global_avg); }
template <typename T>
BasicTensor<T> upsample_nearest2(const BasicTensor<T>& x) {
  return pool_and_resize(x, PoolKind::nearest_upsample2);
}

inline constexpr double kProbClamp = 1e-7;

/// Mean binary cross-entropy. Predictions are clamped to [1e-7, 1 - 1e-7]
/// before the logs; the gradient is evaluated at the clamped point.
template <typename T>
BasicTensor<T> bce(const BasicTensor<T>& pred, const BasicTensor<T>& target);

/// Mean softmax cross-entropy of N×K logits against class indices.
template <typename T>
BasicTensor<T> softmax_xent(const BasicTensor<T>& logits, std::span<const int> labels);

/// Mean squared error.
template <typename T>
BasicTensor<T> l2(const BasicTensor<T>& pred, const BasicTensor<T>& target);

enum class LossKind { bce, softmax_xent, l2 };

/// Row-wise softmax of N×K logits. Not differentiated.
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

}  // namespace retisynth
