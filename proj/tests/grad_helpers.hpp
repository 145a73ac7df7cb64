#pragma once

#include <functional>
#include <vector>

#include "fd_oracle.hpp"
#include "retisynth/tensor.hpp"

// Max relative error between autodiff gradients of `param` and central
// differences of `loss`, over at most `max_checks` evenly spaced entries.
inline double max_param_grad_error(retisynth::Tensor64 param, const std::function<retisynth::Tensor64()>& loss,
                                   double eps = 1e-6, std::size_t max_checks = 64) {
  param.zero_grad();
  loss().backward();
  std::vector<double> analytic(param.grad().begin(), param.grad().end());
  auto values = param.mutable_data();
  const std::size_t step = std::max<std::size_t>(1, values.size() / max_checks);
  double worst = 0;
  for (std::size_t i = 0; i < values.size(); i += step) {
    const double numeric = fd::central(values, i, eps, [&] {
      retisynth::NoGradGuard guard;
      return loss().item();
    });
    worst = std::max(worst, fd::rel_err(analytic[i], numeric));
  }
  return worst;
}

inline retisynth::Tensor64 random_param(retisynth::Shape shape, std::uint64_t seed, double sd = 1.0) {
  auto n = retisynth::shape_numel(shape);
  return retisynth::Tensor64::parameter(std::move(shape), fd::random_values(n, seed, sd));
}
