#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "propel/dsl.hpp"
#include "propel/env.hpp"
#include "propel/nn.hpp"

namespace propel {

struct TransitionStep {
  Vec obs;
  Vec action;  // as executed (clipped)
  double reward = 0.0;
  Vec next_obs;
  bool done = false;
};

struct Trajectory {
  std::vector<TransitionStep> steps;
  double gamma = 1.0;
  double ret = 0.0;  // discounted return, forward fold over steps
};

double trajectory_return(const std::vector<TransitionStep>& steps, double gamma);

struct Bounds {
  Vec low, high;
};

struct ProgramPolicy {
  Program program;
  Bounds bounds;
};

struct NeuralPolicy {
  NeuralParams theta;
  Bounds bounds;
};

// Lifted policy: program plus neural residual, f(s) = clip(pi(s) + lambda * nn(s)).
struct MixedPolicy {
  Program program;
  NeuralParams theta;
  double lambda = 1.0;
  Bounds bounds;
};

enum class PolicyKind { program_only, neural_only, mixed };

using Policy = std::variant<ProgramPolicy, NeuralPolicy, MixedPolicy>;

PolicyKind kind_of(const Policy& policy);
ProgState make_policy_state(const Policy& policy);

// One action from the newest observation in `history`. Program accumulators
// in `state` advance exactly once. The returned action is clipped to the
// policy bounds (programs themselves stay unclipped so they compose).
Vec policy_act(const Policy& policy, std::span<const Vec> history,
               ProgState& state, double dt);
Vec policy_act(const Policy& policy, const Vec& obs, ProgState& state, double dt);

// Commanded output before the actuation clip: pi(s), nn(s), or
// pi(s) + lambda * nn(s). Imitation labels use this (saturated actions do
// not identify the underlying policy function).
Vec policy_act_raw(const Policy& policy, const Vec& obs, ProgState& state,
                   double dt);

// Resets env with `seed`, runs the policy for at most `horizon` steps
// (0 = env max), records the discounted return.
Trajectory rollout(const Policy& policy, Env& env, int horizon,
                   std::uint64_t seed, double gamma);

// Mean/stddev of rollout returns over exactly the given seeds. Sample
// stddev (n-1); 0 when a single seed. Episodes fan out over `workers`
// threads on copies of env; results merge by seed index.
std::pair<double, double> mean_return(const Policy& policy, const Env& env,
                                      std::span<const std::uint64_t> seeds,
                                      double gamma, int horizon = 0,
                                      int workers = 1);

std::vector<std::uint64_t> seed_range(std::uint64_t first, int count);

}  // namespace propel
