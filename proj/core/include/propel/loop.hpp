#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "propel/project.hpp"
#include "propel/update.hpp"

namespace propel {

struct EvalConfig {
  int episodes = 10;
  std::uint64_t seed0 = 10000;  // seeds seed0 .. seed0+episodes-1, fixed per run
  double gamma = 1.0;
  int horizon = 0;
};

struct PropelConfig {
  int iterations = 5;
  UpdateConfig update;
  DaggerConfig dagger;
  EvalConfig eval;
  bool warm_start_theta = true;  // carry theta across iterations
  std::string run_dir;           // empty disables checkpointing
  int workers = 1;

  void validate() const;
};

struct IterationRecord {
  int iter = 0;
  double prog_return_mean = 0.0;
  double prog_return_std = 0.0;
  double mixed_return_mean = 0.0;
  double mixed_return_std = 0.0;
  double heldout_mse = 0.0;
  bool update_diverged = false;
  double wall_seconds = 0.0;  // timing.log only; metrics.csv stays deterministic
};

struct PropelResult {
  Program best_program;
  int best_iteration = 0;  // argmax program return, ties to the earliest
  std::vector<IterationRecord> records;  // records[0] is the prior
};

// Algorithm loop: for t = 1..T, f_t = update(pi_{t-1}); pi_t = project(f_t).
// Iteration t draws seed + 1000*t for the update phase and
// seed + 1000*t + 500 for the projection phase. A diverged update skips the
// projection and keeps pi_t = pi_{t-1}.
PropelResult propel_run(Env env, const Program& pi0, const PropelConfig& cfg,
                        std::uint64_t seed);

// Cold restart from run_dir/iter_{from_iter}: replays the same seed schedule
// for iterations from_iter+1 .. T. Records cover only the resumed range.
PropelResult propel_resume(Env env, const PropelConfig& cfg, std::uint64_t seed,
                           int from_iter);

std::pair<Program, NeuralParams> load_checkpoint(const std::string& run_dir,
                                                 int iteration);

std::string iteration_dir(const std::string& run_dir, int iteration);
std::string metrics_header();
std::string metrics_row(const IterationRecord& rec);

}  // namespace propel
