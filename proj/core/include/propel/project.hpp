#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "propel/policy.hpp"

namespace propel {

// One labeled state: observation, the template's pid accumulator context at
// that point of the episode, and the expert's (noise-free, clipped) action.
struct ImitationRow {
  Vec obs;
  std::vector<PidContext> context;
  Vec label;
  int round = 0;
};

struct ImitationDataset {
  int obs_dim = 0;
  int act_dim = 0;
  int pid_slots = 0;
  std::vector<ImitationRow> rows;

  void append(std::vector<ImitationRow> more);
  // obs_0.., pid{j}_e / pid{j}_i / pid{j}_d per slot, act_0.., round
  void dump_csv(const std::string& path) const;
};

struct DaggerConfig {
  int rounds = 5;
  int episodes = 5;

  // beta_1..beta_N, non-increasing. first_only is the classic choice:
  // pure expert in round 1, learner control afterwards.
  enum class BetaSchedule { first_only, constant, geometric };
  BetaSchedule schedule = BetaSchedule::first_only;
  double beta_value = 1.0;

  ClassConfig fit;
  double holdout_frac = 0.2;  // last fraction of each round's rows
  int horizon = 0;            // 0 = env max

  int eval_episodes = 5;  // per-round program-return metric
  std::uint64_t eval_seed0 = 5000;
  double eval_gamma = 1.0;
  int workers = 1;

  void validate() const;
  double beta(int round) const;  // round is 1-based
};

// One aggregation round. Per step: with probability beta_k the expert's
// action is executed, otherwise the learner's; the label is always the
// expert's action at the visited state. The learner's pid context is
// recorded alongside.
std::vector<ImitationRow> collect_round(const MixedPolicy& expert,
                                        const Program& learner, Env& env,
                                        double beta_k, int episodes,
                                        int horizon, std::uint64_t seed,
                                        int round_tag);

struct FitPidResult {
  Program program;
  double train_mse = 0.0;
};

// Ordinary least squares over the template's free parameters (minimum-norm
// when rank-deficient). row_mask, when non-empty, selects training rows.
FitPidResult fit_pid(const ImitationDataset& data, const Program& templ,
                     const std::vector<char>& row_mask = {});

// Mean squared error of a candidate's unclipped prediction on masked rows.
double imitation_mse(const ImitationDataset& data, const Program& candidate,
                     const std::vector<char>& row_mask);

struct ProjectionRound {
  int round = 0;
  std::size_t rows_total = 0;
  double beta = 0.0;
  double train_mse = 0.0;
  double heldout_mse = 0.0;  // on the final held-out set, comparable across rounds
  double prog_return_mean = 0.0;
  double prog_return_std = 0.0;
};

struct ProjectionMetrics {
  std::vector<ProjectionRound> rounds;
  int best_round = 0;
  double best_heldout_mse = 0.0;
  std::string to_csv() const;
};

// The PROJECT step: N DAgger rounds against the mixed policy, refit on all
// aggregated training rows after each round, return the round fit with the
// lowest held-out imitation MSE (ties to the earliest round). For the pid
// class the template is the expert's own program component.
std::pair<Program, ProjectionMetrics> project(const MixedPolicy& expert, Env env,
                                              const DaggerConfig& cfg,
                                              std::uint64_t seed,
                                              ImitationDataset* dataset_out = nullptr);

// Max action distance between two programs over short random observation
// sequences drawn from the spec's observation ranges (fresh accumulators,
// actions clipped to the spec bounds).
double probe_distance(const Program& a, const Program& b, const EnvSpec& spec,
                      int n_probes, std::uint64_t seed, int probe_len = 3);

}  // namespace propel
