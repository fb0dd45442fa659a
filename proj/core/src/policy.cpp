#include "propel/policy.hpp"

#include <cmath>
#include <thread>

#include "propel/errors.hpp"

namespace propel {

double trajectory_return(const std::vector<TransitionStep>& steps, double gamma) {
  double ret = 0.0, g = 1.0;
  for (const auto& s : steps) {
    ret += g * s.reward;
    g *= gamma;
  }
  return ret;
}

PolicyKind kind_of(const Policy& policy) {
  if (std::holds_alternative<ProgramPolicy>(policy)) return PolicyKind::program_only;
  if (std::holds_alternative<NeuralPolicy>(policy)) return PolicyKind::neural_only;
  return PolicyKind::mixed;
}

ProgState make_policy_state(const Policy& policy) {
  switch (kind_of(policy)) {
    case PolicyKind::program_only:
      return make_state(std::get<ProgramPolicy>(policy).program);
    case PolicyKind::mixed:
      return make_state(std::get<MixedPolicy>(policy).program);
    case PolicyKind::neural_only:
      return {};
  }
  return {};
}

static Vec clip_to(const Bounds& b, Vec v) {
  return v.cwiseMax(b.low).cwiseMin(b.high);
}

Vec policy_act(const Policy& policy, std::span<const Vec> history,
               ProgState& state, double dt) {
  if (history.empty()) throw ContractError("policy_act: empty observation history");
  return policy_act(policy, history.back(), state, dt);
}

Vec policy_act_raw(const Policy& policy, const Vec& obs, ProgState& state,
                   double dt) {
  switch (kind_of(policy)) {
    case PolicyKind::program_only:
      return eval_step(std::get<ProgramPolicy>(policy).program, state, obs, dt);
    case PolicyKind::neural_only:
      return nn_forward(std::get<NeuralPolicy>(policy).theta, obs);
    case PolicyKind::mixed: {
      const auto& p = std::get<MixedPolicy>(policy);
      Vec u = eval_step(p.program, state, obs, dt);
      if (p.lambda != 0.0) u += p.lambda * nn_forward(p.theta, obs);
      return u;
    }
  }
  return {};
}

Vec policy_act(const Policy& policy, const Vec& obs, ProgState& state, double dt) {
  const Bounds& b = std::visit([](const auto& p) -> const Bounds& {
    return p.bounds;
  }, policy);
  return clip_to(b, policy_act_raw(policy, obs, state, dt));
}

Trajectory rollout(const Policy& policy, Env& env, int horizon,
                   std::uint64_t seed, double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0))
    throw ContractError("rollout: gamma must be in (0, 1]");
  if (horizon <= 0) horizon = env.spec().max_horizon;
  if (horizon > env.spec().max_horizon)
    throw ContractError("rollout: horizon exceeds env max_horizon");

  Trajectory traj;
  traj.gamma = gamma;
  Vec obs = env.reset(seed);
  ProgState state = make_policy_state(policy);  // accumulators zeroed per episode
  std::vector<Vec> history;
  history.reserve((size_t)horizon);
  history.push_back(obs);
  for (int t = 0; t < horizon && !env.done(); ++t) {
    Vec action = policy_act(policy, std::span<const Vec>(history), state,
                            env.spec().dt);
    action = env.clip_action(action);
    StepResult sr = env.step(action);
    traj.steps.push_back({obs, action, sr.reward, sr.obs, sr.done});
    obs = sr.obs;
    history.push_back(obs);
  }
  traj.ret = trajectory_return(traj.steps, gamma);
  return traj;
}

std::vector<std::uint64_t> seed_range(std::uint64_t first, int count) {
  std::vector<std::uint64_t> seeds((size_t)count);
  for (int i = 0; i < count; ++i) seeds[(size_t)i] = first + (std::uint64_t)i;
  return seeds;
}

std::pair<double, double> mean_return(const Policy& policy, const Env& env,
                                      std::span<const std::uint64_t> seeds,
                                      double gamma, int horizon, int workers) {
  if (seeds.empty()) throw ContractError("mean_return: need at least one seed");
  const int n = (int)seeds.size();
  std::vector<double> returns((size_t)n, 0.0);

  auto run_slice = [&](int begin, int end) {
    Env local = env;  // value copy per worker
    for (int i = begin; i < end; ++i)
      returns[(size_t)i] = rollout(policy, local, horizon, seeds[(size_t)i], gamma).ret;
  };

  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    run_slice(0, n);
  } else {
    std::vector<std::thread> pool;
    int chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      int begin = w * chunk, end = std::min(n, begin + chunk);
      if (begin >= end) break;
      pool.emplace_back(run_slice, begin, end);
    }
    for (auto& th : pool) th.join();
  }

  double mean = 0.0;
  for (double r : returns) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : returns) var += (r - mean) * (r - mean);
  double std = n > 1 ? std::sqrt(var / (n - 1)) : 0.0;
  return {mean, std};
}

}  // namespace propel
