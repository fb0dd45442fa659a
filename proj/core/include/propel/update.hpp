#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "propel/policy.hpp"

namespace propel {

// UPDATE-phase budget and learner hyperparameters. The program component is
// frozen for the whole phase; only the neural residual trains.
struct UpdateConfig {
  int steps = 10000;  // environment steps (and, past warmup, gradient steps)
  double actor_lr = 1e-3;
  double critic_lr = 1e-3;
  double gamma = 0.99;
  double tau = 0.005;
  double noise_scale = 0.2;  // exploration noise std, action units
  int batch_size = 64;
  int warmup = 1000;  // uniform-random actions before any gradient step
  std::size_t buffer_capacity = 100000;
  std::vector<int> hidden = {64, 64};
  double lambda = 1.0;
  double divergence_loss = 1e6;

  void validate() const;
};

struct EpisodeStat {
  int episode = 0;
  int env_steps = 0;   // cumulative at episode end
  double ret = 0.0;    // undiscounted training return
  double critic_loss = 0.0;  // mean over the episode's gradient steps
  double actor_q = 0.0;      // mean online Q under the current actor
};

struct UpdateMetrics {
  std::vector<EpisodeStat> episodes;
  double final_critic_loss = 0.0;
  int steps_done = 0;
  bool diverged = false;
  std::string divergence_reason;

  std::string to_csv() const;  // deterministic; no wall-clock fields
};

// Fresh actor/critic for an environment (tanh hidden units; actor output
// tanh-scaled to the action bounds, critic linear on [obs; action]).
NeuralParams make_actor(const EnvSpec& spec, const UpdateConfig& cfg, Rng& rng);
NeuralParams make_critic(const EnvSpec& spec, const UpdateConfig& cfg, Rng& rng);

// One UPDATE phase: DDPG on the residual around the fixed program.
// theta0.empty() initializes a fresh actor from the phase seed. On
// divergence the last end-of-episode snapshot of theta comes back with
// metrics.diverged set.
std::pair<MixedPolicy, UpdateMetrics> update_f(const Program& program,
                                               const NeuralParams& theta0,
                                               Env env, const UpdateConfig& cfg,
                                               std::uint64_t seed);

}  // namespace propel
