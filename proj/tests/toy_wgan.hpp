#pragma once

#include <vector>

#include "retisynth/builders.hpp"
#include "retisynth/training.hpp"

// 1-D WGAN: real samples are all +1, the generator starts emitting -1.
struct ToyWganRun {
  std::vector<double> gen_mean;  // mean generator output after each step
  std::vector<double> estimate;  // critic estimate per step
  std::vector<float> max_abs_critic;
};

inline ToyWganRun run_toy_wgan(std::size_t steps, double lr, std::uint64_t seed = 0) {
  using namespace retisynth;
  auto g = build_mlp<float>({1, 1}, Activation{ActivationKind::relu}, seed);
  for (auto& p : g.parameters())
    for (auto& v : p.tensor.mutable_data()) v = p.name == "fc1.bias" ? -1.0f : 0.0f;
  auto critic = build_mlp<float>({1, 32, 32, 1}, Activation{ActivationKind::leaky_relu, 0.2}, seed + 1,
                                 InitScheme::dcgan);
  WganConfig cfg;
  cfg.lr = lr;
  cfg.batch_size = 32;
  cfg.latent_dim = 1;
  cfg.seed = seed;
  WganState state = make_wgan_state(g, critic, cfg);
  LatentSampler sampler(1, seed + 2), probe(1, seed + 3);
  const Tensor real(Shape{cfg.batch_size, 1}, 1.0f);
  const Tensor z = probe.sample(256);
  ToyWganRun run;
  for (std::size_t s = 0; s < steps; ++s) {
    const auto r = wgan_step(g, critic, real, sampler, cfg, state);
    NoGradGuard guard;
    run.gen_mean.push_back(mean(g(z)).item());
    run.estimate.push_back(r.critic_estimate);
    run.max_abs_critic.push_back(r.max_abs_critic);
  }
  return run;
}
