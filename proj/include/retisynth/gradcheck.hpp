#pragma once

#include <cstdint>
#include <functional>

#include "retisynth/network.hpp"

namespace retisynth {

struct GradCheckOptions {
  double eps = 1e-6;                    // in [1e-6, 1e-4]
  std::size_t samples_per_param = 16;   // entries probed per parameter tensor
  std::uint64_t seed = 0;
};

/// Largest |analytic - numeric| / max(|analytic|, |numeric|, 1e-8) over a
/// sample of parameter entries, using central differences of `loss_fn`.
/// Runs in 64-bit.
double grad_check(Network<double>& net, const std::function<Tensor64()>& loss_fn, GradCheckOptions opts = {});

}  // namespace retisynth
