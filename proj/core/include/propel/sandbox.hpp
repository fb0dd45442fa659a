#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "propel/env.hpp"

namespace propel {

// Projected gradient descent on a quadratic over a box, with injectable
// gradient bias (norm beta), gradient noise (std sigma) and projection
// error (norm <= eps) — the error model of the mirror-descent analysis,
// in its checkable Euclidean instance.
struct MdConfig {
  int dim = 2;
  int iterations = 10000;

  enum class StepSchedule { constant, inv_sqrt };
  StepSchedule schedule = StepSchedule::constant;
  double step_c = 0.1;  // eta_t = c (constant) or c / sqrt(t)

  Vec box_lo, box_hi;
  Vec target;              // x*; loss J(x) = 0.5 (x-x*)^T A (x-x*)
  Eigen::MatrixXd scale;   // PSD A; empty = identity

  double bias_norm = 0.0;   // beta: |b| of the fixed per-repeat bias
  double noise_std = 0.0;   // sigma: N(0, sigma^2 I) per step
  double proj_error = 0.0;  // eps: perturbation after exact projection

  Vec start;  // empty = clip(target, box): zero transient at zero error

  std::uint64_t seed = 0;
  int repeats = 32;
  int workers = 1;

  void validate() const;
  double loss(const Vec& x) const;
  Vec gradient(const Vec& x) const;
  double smoothness() const;  // L = lambda_max(A)
};

struct RegretTrace {
  std::vector<std::vector<double>> per_repeat_loss;  // [repeat][t-1]
  std::vector<double> loss_mean, loss_se;
  std::vector<double> avg_regret_mean, avg_regret_se;  // (1/t) sum (J - J(x°))
  Vec optimum;
  double optimum_value = 0.0;

  double final_avg_regret() const { return avg_regret_mean.back(); }
  // CSV: iteration, loss_mean, loss_se, avg_regret_mean, avg_regret_se
  void write_csv(const std::string& path, int stride = 1) const;
};

// Constrained optimum x°. Identity scale: coordinatewise clip of x*.
// General PSD scale: exact-projection gradient descent run to convergence
// (documented oracle).
Vec oracle_optimum(const MdConfig& cfg);

RegretTrace run_approx_pgd(const MdConfig& cfg);

// Least-squares slope of log(avg regret) vs log(t) over [t_lo, t_hi],
// sampled at n_points log-spaced iterations.
double loglog_slope(const RegretTrace& trace, int t_lo, int t_hi,
                    int n_points = 64);

}  // namespace propel
