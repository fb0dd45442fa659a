#include <doctest.h>
#include <propel/errors.hpp>
#include <propel/sandbox.hpp>

#include <cmath>

using namespace propel;

namespace {

MdConfig base_cfg() {
  MdConfig cfg;
  cfg.dim = 2;
  cfg.box_lo = Vec::Constant(2, -1.0);
  cfg.box_hi = Vec::Constant(2, 1.0);
  cfg.target = Vec(2);
  cfg.target << 0.3, -0.2;
  cfg.iterations = 3000;
  cfg.step_c = 0.5;
  cfg.repeats = 4;
  return cfg;
}

}  // namespace

TEST_SUITE_BEGIN("sandbox");

TEST_CASE("oracle optimum clips the target for identity scale") {
  MdConfig cfg = base_cfg();
  cfg.target << 3.0, 0.0;
  Vec opt = oracle_optimum(cfg);
  CHECK(opt[0] == doctest::Approx(1.0));
  CHECK(opt[1] == doctest::Approx(0.0));

  cfg.target << 0.3, -0.2;  // interior point
  opt = oracle_optimum(cfg);
  CHECK(opt[0] == doctest::Approx(0.3));
  CHECK(opt[1] == doctest::Approx(-0.2));
}

TEST_CASE("oracle optimum matches a fine grid search for a PSD scale") {
  MdConfig cfg = base_cfg();
  cfg.target << 1.5, -0.7;
  cfg.scale = Eigen::MatrixXd(2, 2);
  cfg.scale << 2.0, 0.3, 0.3, 1.0;
  Vec opt = oracle_optimum(cfg);

  double best = std::numeric_limits<double>::infinity();
  Vec best_x(2);
  const int n = 1000;
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= n; ++j) {
      Vec x(2);
      x << -1.0 + 2.0 * i / n, -1.0 + 2.0 * j / n;
      double v = cfg.loss(x);
      if (v < best) {
        best = v;
        best_x = x;
      }
    }
  }
  CHECK((opt - best_x).lpNorm<Eigen::Infinity>() < 1e-3 + 2.0 / n);
  CHECK(cfg.loss(opt) <= best + 1e-9);
}

TEST_CASE("exact projected gradient reaches the optimum") {
  MdConfig cfg = base_cfg();
  cfg.start = Vec(2);
  cfg.start << -1.0, 1.0;  // far corner
  RegretTrace trace = run_approx_pgd(cfg);
  CHECK(trace.loss_mean.back() - trace.optimum_value <= 1e-8);
  CHECK(trace.final_avg_regret() >= -1e-12);
}

TEST_CASE("iterates stay feasible: losses bounded by the worst corner") {
  MdConfig cfg = base_cfg();
  cfg.noise_std = 0.3;
  cfg.bias_norm = 0.2;
  cfg.proj_error = 0.5;
  cfg.iterations = 500;
  RegretTrace trace = run_approx_pgd(cfg);
  double worst_corner = 0.0;
  for (int mask = 0; mask < 4; ++mask) {
    Vec corner(2);
    corner << (mask & 1 ? 1.0 : -1.0), (mask & 2 ? 1.0 : -1.0);
    worst_corner = std::max(worst_corner, cfg.loss(corner));
  }
  for (const auto& series : trace.per_repeat_loss)
    for (double loss : series) REQUIRE(loss <= worst_corner + 1e-12);
}

TEST_CASE("loglog_slope recovers a synthetic power law") {
  RegretTrace trace;
  const int T = 100000;
  trace.avg_regret_mean.resize((size_t)T);
  for (int t = 1; t <= T; ++t)
    trace.avg_regret_mean[(size_t)t - 1] = 3.0 * std::pow((double)t, -0.5);
  trace.loss_mean.assign((size_t)T, 0.0);
  CHECK(loglog_slope(trace, 100, T) == doctest::Approx(-0.5).epsilon(1e-6));
}

TEST_CASE("noisy decaying-step runs show the square-root regret rate") {
  MdConfig cfg = base_cfg();
  cfg.schedule = MdConfig::StepSchedule::inv_sqrt;
  cfg.noise_std = 0.5;
  cfg.iterations = 20000;
  cfg.repeats = 12;
  cfg.workers = 4;
  RegretTrace trace = run_approx_pgd(cfg);
  double slope = loglog_slope(trace, 100, cfg.iterations);
  MESSAGE("slope: ", slope);
  CHECK(slope == doctest::Approx(-0.5).epsilon(0.3));  // +-0.15 absolute
}

TEST_CASE("final average regret is monotone in the projection error") {
  std::vector<double> finals, ses;
  for (double eps : {0.0, 0.05, 0.1}) {
    MdConfig cfg = base_cfg();
    cfg.schedule = MdConfig::StepSchedule::inv_sqrt;
    cfg.proj_error = eps;
    cfg.iterations = 5000;
    cfg.repeats = 8;
    cfg.workers = 4;
    RegretTrace trace = run_approx_pgd(cfg);
    finals.push_back(trace.final_avg_regret());
    ses.push_back(trace.avg_regret_se.back());
  }
  CHECK(finals[1] >= finals[0] - 3.0 * (ses[1] + ses[0]));
  CHECK(finals[2] >= finals[1] - 3.0 * (ses[2] + ses[1]));
}

TEST_CASE("traces are deterministic and worker-count independent") {
  MdConfig cfg = base_cfg();
  cfg.noise_std = 0.2;
  cfg.proj_error = 0.05;
  cfg.iterations = 400;
  RegretTrace a = run_approx_pgd(cfg);
  cfg.workers = 3;
  RegretTrace b = run_approx_pgd(cfg);
  REQUIRE(a.avg_regret_mean.size() == b.avg_regret_mean.size());
  for (size_t t = 0; t < a.avg_regret_mean.size(); ++t)
    REQUIRE(a.avg_regret_mean[t] == b.avg_regret_mean[t]);
}

TEST_CASE("config validation") {
  MdConfig cfg = base_cfg();
  cfg.box_lo[0] = 2.0;  // empty box
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = base_cfg();
  cfg.scale = Eigen::MatrixXd(2, 2);
  cfg.scale << 1.0, 0.9, 0.9, -1.0;  // indefinite
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_SUITE_END();
