#include "retisynth/optim.hpp"

#include <algorithm>
#include <cmath>

namespace retisynth {

void validate(const OptimizerConfig& cfg) {
  if (!(cfg.lr > 0)) throw ConfigError("optimizer: lr must be > 0");
  if (!(cfg.eps > 0)) throw ConfigError("optimizer: eps must be > 0");
  if (!(cfg.rho > 0 && cfg.rho < 1)) throw ConfigError("optimizer: rho must lie in (0,1)");
  if (!(cfg.beta1 >= 0 && cfg.beta1 < 1) || !(cfg.beta2 >= 0 && cfg.beta2 < 1))
    throw ConfigError("optimizer: betas must lie in [0,1)");
}

template <typename T>
void optimizer_step(std::span<T> params, std::span<const T> grads, const OptimizerConfig& cfg, OptimizerState& state) {
  if (params.size() != grads.size())
    throw ContractError("optimizer_step: " + std::to_string(params.size()) + " params but " +
                        std::to_string(grads.size()) + " grads");
  const std::size_t n = params.size();
  if (state.t == 0) {
    state.m.assign(cfg.kind == OptimizerKind::adam ? n : 0, 0.0);
    state.v.assign(cfg.kind == OptimizerKind::sgd ? 0 : n, 0.0);
  } else if ((cfg.kind != OptimizerKind::sgd && state.v.size() != n) ||
             (cfg.kind == OptimizerKind::adam && state.m.size() != n)) {
    throw ContractError("optimizer_step: parameter size changed between steps");
  }
  ++state.t;

  switch (cfg.kind) {
    case OptimizerKind::sgd:
      for (std::size_t i = 0; i < n; ++i) params[i] = static_cast<T>(params[i] - cfg.lr * grads[i]);
      break;
    case OptimizerKind::rmsprop:
      for (std::size_t i = 0; i < n; ++i) {
        const double g = grads[i];
        state.v[i] = cfg.rho * state.v[i] + (1 - cfg.rho) * g * g;
        params[i] = static_cast<T>(params[i] - cfg.lr * g / std::sqrt(state.v[i] + cfg.eps));
      }
      break;
    case OptimizerKind::adam: {
      const double c1 = 1 - std::pow(cfg.beta1, static_cast<double>(state.t));
      const double c2 = 1 - std::pow(cfg.beta2, static_cast<double>(state.t));
      for (std::size_t i = 0; i < n; ++i) {
        const double g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1 - cfg.beta2) * g * g;
        params[i] = static_cast<T>(params[i] - cfg.lr * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + cfg.eps));
      }
      break;
    }
  }
}

template <typename T>
Optimizer<T>::Optimizer(OptimizerConfig cfg, std::vector<NamedTensor<T>> params)
    : cfg_(cfg), params_(std::move(params)), states_(params_.size()) {
  validate(cfg_);
  for (auto& p : params_) shapes_.push_back(p.tensor.shape());
}

template <typename T>
void Optimizer<T>::step() {
  std::vector<T> zeros;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& t = params_[i].tensor;
    if (t.shape() != shapes_[i])
      throw ContractError("optimizer: parameter '" + params_[i].name + "' changed shape from " +
                          shape_str(shapes_[i]) + " to " + shape_str(t.shape()));
    if (t.has_grad()) {
      optimizer_step<T>(t.mutable_data(), t.grad(), cfg_, states_[i]);
    } else {
      zeros.assign(t.numel(), T(0));
      optimizer_step<T>(t.mutable_data(), zeros, cfg_, states_[i]);
    }
  }
}

template <typename T>
void Optimizer<T>::set_lr(double lr) {
  if (!(lr > 0)) throw ConfigError("optimizer: lr must be > 0");
  cfg_.lr = lr;
}

template <typename T>
void clamp_parameters(std::vector<NamedTensor<T>> params, T c) {
  for (auto& p : params)
    for (auto& v : p.tensor.mutable_data()) v = std::clamp(v, -c, c);
}

template <typename T>
T max_abs_parameter(const std::vector<NamedTensor<T>>& params) {
  T m = 0;
  for (const auto& p : params)
    for (T v : p.tensor.data()) m = std::max(m, std::abs(v));
  return m;
}

template void optimizer_step<float>(std::span<float>, std::span<const float>, const OptimizerConfig&,
                                    OptimizerState&);
template void optimizer_step<double>(std::span<double>, std::span<const double>, const OptimizerConfig&,
                                     OptimizerState&);
template class Optimizer<float>;
template class Optimizer<double>;
template void clamp_parameters<float>(std::vector<NamedTensor<float>>, float);
template void clamp_parameters<double>(std::vector<NamedTensor<double>>, double);
template float max_abs_parameter<float>(const std::vector<NamedTensor<float>>&);
template double max_abs_parameter<double>(const std::vector<NamedTensor<double>>&);

}  // namespace retisynth
