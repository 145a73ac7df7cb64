#include "retisynth/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace retisynth {

namespace {

double finite_loss(const std::function<Tensor64()>& loss_fn) {
  NoGradGuard guard;
  const double v = loss_fn().item();
  if (!std::isfinite(v)) throw NumericError("grad_check: loss is not finite");
  return v;
}

}  // namespace

double grad_check(Network<double>& net, const std::function<Tensor64()>& loss_fn, GradCheckOptions opts) {
  if (!(opts.eps >= 1e-6 && opts.eps <= 1e-4)) throw ConfigError("grad_check: eps must lie in [1e-6, 1e-4]");
  net.zero_grad();
  Tensor64 loss = loss_fn();
  if (loss.numel() != 1) throw ContractError("grad_check: loss must be scalar");
  if (!std::isfinite(loss.item())) throw NumericError("grad_check: loss is not finite");
  loss.backward();

  std::mt19937_64 rng(opts.seed);
  double worst = 0.0;
  for (auto& p : net.parameters()) {
    const std::vector<double> analytic = p.tensor.has_grad()
                                             ? std::vector<double>(p.tensor.grad().begin(), p.tensor.grad().end())
                                             : std::vector<double>(p.tensor.numel(), 0.0);
    auto values = p.tensor.mutable_data();
    std::vector<std::size_t> idx(values.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (idx.size() > opts.samples_per_param) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(opts.samples_per_param);
    }
    for (std::size_t i : idx) {
      const double saved = values[i];
      values[i] = saved + opts.eps;
      const double up = finite_loss(loss_fn);
      values[i] = saved - opts.eps;
      const double down = finite_loss(loss_fn);
      values[i] = saved;
      const double numeric = (up - down) / (2 * opts.eps);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
  }
  net.zero_grad();
  return worst;
}

}  // namespace retisynth
