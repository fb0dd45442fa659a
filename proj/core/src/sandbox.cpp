#include "propel/sandbox.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <thread>

#include "propel/csv.hpp"
#include "propel/errors.hpp"

namespace propel {

void MdConfig::validate() const {
  if (dim < 1) throw ConfigError("sandbox.dim must be >= 1");
  if (iterations < 1) throw ConfigError("sandbox.iters must be >= 1");
  if (!(step_c > 0)) throw ConfigError("sandbox.step must be > 0");
  if (box_lo.size() != dim || box_hi.size() != dim)
    throw ConfigError("sandbox box must match dim");
  for (int i = 0; i < dim; ++i)
    if (!(box_lo[i] < box_hi[i])) throw ConfigError("sandbox box is empty");
  if (target.size() != dim) throw ConfigError("sandbox target must match dim");
  if (bias_norm < 0 || noise_std < 0 || proj_error < 0)
    throw ConfigError("sandbox error knobs must be >= 0");
  if (repeats < 1) throw ConfigError("sandbox.repeats must be >= 1");
  if (start.size() != 0 && start.size() != dim)
    throw ConfigError("sandbox start must match dim");
  if (scale.size() != 0) {
    if (scale.rows() != dim || scale.cols() != dim)
      throw ConfigError("sandbox scale must be dim x dim");
    if (!scale.isApprox(scale.transpose(), 1e-12))
      throw ConfigError("sandbox scale must be symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(scale);
    if (es.eigenvalues().minCoeff() < -1e-10)
      throw ConfigError("sandbox scale must be positive semidefinite");
  }
}

double MdConfig::loss(const Vec& x) const {
  Vec d = x - target;
  if (scale.size() == 0) return 0.5 * d.squaredNorm();
  return 0.5 * d.dot(scale * d);
}

Vec MdConfig::gradient(const Vec& x) const {
  Vec d = x - target;
  if (scale.size() == 0) return d;
  return scale * d;
}

double MdConfig::smoothness() const {
  if (scale.size() == 0) return 1.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(scale);
  return std::max(es.eigenvalues().maxCoeff(), 1e-12);
}

namespace {

Vec clip_box(const MdConfig& cfg, Vec x) {
  return x.cwiseMax(cfg.box_lo).cwiseMin(cfg.box_hi);
}

Vec gaussian_direction(int dim, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec u(dim);
  for (int i = 0; i < dim; ++i) u[i] = gauss(rng);
  double n = u.norm();
  if (n < 1e-300) {
    u.setZero();
    u[0] = 1.0;
    return u;
  }
  return u / n;
}

}  // namespace

Vec oracle_optimum(const MdConfig& cfg) {
  if (cfg.scale.size() == 0) return clip_box(cfg, cfg.target);
  // Exact-projection gradient descent at step 1/L until the iterate stalls.
  const double eta = 1.0 / cfg.smoothness();
  Vec x = clip_box(cfg, cfg.target);
  for (int k = 0; k < 2000000; ++k) {
    Vec next = clip_box(cfg, x - eta * cfg.gradient(x));
    double moved = (next - x).lpNorm<Eigen::Infinity>();
    x = next;
    if (moved < 1e-15) break;
  }
  return x;
}

RegretTrace run_approx_pgd(const MdConfig& cfg) {
  cfg.validate();
  const int T = cfg.iterations;
  const int R = cfg.repeats;

  RegretTrace trace;
  trace.optimum = oracle_optimum(cfg);
  trace.optimum_value = cfg.loss(trace.optimum);
  trace.per_repeat_loss.assign((size_t)R, {});

  auto run_repeat = [&](int repeat) {
    Rng rng = make_rng(cfg.seed, 0x5B0 + (std::uint64_t)repeat);
    std::normal_distribution<double> gauss(0.0, 1.0);

    Vec bias = cfg.bias_norm > 0
                   ? (cfg.bias_norm * gaussian_direction(cfg.dim, rng)).eval()
                   : Vec::Zero(cfg.dim).eval();
    // default start is the clipped target: the zero-error run then has no
    // transient and the traces isolate the injected error terms
    Vec x = cfg.start.size() != 0 ? clip_box(cfg, cfg.start)
                                  : clip_box(cfg, cfg.target);

    std::vector<double>& losses = trace.per_repeat_loss[(size_t)repeat];
    losses.resize((size_t)T);
    for (int t = 1; t <= T; ++t) {
      losses[(size_t)t - 1] = cfg.loss(x);
      double eta = cfg.schedule == MdConfig::StepSchedule::constant
                       ? cfg.step_c
                       : cfg.step_c / std::sqrt((double)t);
      Vec g = cfg.gradient(x) + bias;
      if (cfg.noise_std > 0)
        for (int i = 0; i < cfg.dim; ++i) g[i] += cfg.noise_std * gauss(rng);
      x = clip_box(cfg, x - eta * g);
      if (cfg.proj_error > 0)
        x = clip_box(cfg, x + cfg.proj_error * gaussian_direction(cfg.dim, rng));
    }
  };

  int workers = std::max(1, std::min(cfg.workers, R));
  if (workers == 1) {
    for (int r = 0; r < R; ++r) run_repeat(r);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (int r = w; r < R; r += workers) run_repeat(r);
      });
    for (auto& th : pool) th.join();
  }

  // merge deterministically by repeat index
  trace.loss_mean.assign((size_t)T, 0.0);
  trace.loss_se.assign((size_t)T, 0.0);
  trace.avg_regret_mean.assign((size_t)T, 0.0);
  trace.avg_regret_se.assign((size_t)T, 0.0);
  std::vector<double> cum((size_t)R, 0.0);
  std::vector<double> avg((size_t)R, 0.0);
  for (int t = 0; t < T; ++t) {
    double lmean = 0.0;
    for (int r = 0; r < R; ++r) lmean += trace.per_repeat_loss[(size_t)r][(size_t)t];
    lmean /= R;
    double lvar = 0.0;
    for (int r = 0; r < R; ++r) {
      double d = trace.per_repeat_loss[(size_t)r][(size_t)t] - lmean;
      lvar += d * d;
    }
    trace.loss_mean[(size_t)t] = lmean;
    trace.loss_se[(size_t)t] =
        R > 1 ? std::sqrt(lvar / (R - 1) / R) : 0.0;

    double rmean = 0.0;
    for (int r = 0; r < R; ++r) {
      cum[(size_t)r] +=
          trace.per_repeat_loss[(size_t)r][(size_t)t] - trace.optimum_value;
      avg[(size_t)r] = cum[(size_t)r] / (t + 1);
      rmean += avg[(size_t)r];
    }
    rmean /= R;
    double rvar = 0.0;
    for (int r = 0; r < R; ++r) {
      double d = avg[(size_t)r] - rmean;
      rvar += d * d;
    }
    trace.avg_regret_mean[(size_t)t] = rmean;
    trace.avg_regret_se[(size_t)t] =
        R > 1 ? std::sqrt(rvar / (R - 1) / R) : 0.0;
  }
  return trace;
}

void RegretTrace::write_csv(const std::string& path, int stride) const {
  CsvWriter writer(path, {"iteration", "loss_mean", "loss_se",
                          "avg_regret_mean", "avg_regret_se"});
  const int T = (int)loss_mean.size();
  for (int t = 0; t < T; ++t) {
    if (t % std::max(1, stride) != 0 && t != T - 1) continue;
    writer.append_row({(double)(t + 1), loss_mean[(size_t)t], loss_se[(size_t)t],
                       avg_regret_mean[(size_t)t], avg_regret_se[(size_t)t]});
  }
  writer.flush();
}

double loglog_slope(const RegretTrace& trace, int t_lo, int t_hi, int n_points) {
  const int T = (int)trace.avg_regret_mean.size();
  t_hi = std::min(t_hi, T);
  if (t_lo < 1 || t_lo >= t_hi)
    throw ContractError("loglog_slope: bad iteration range");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (int k = 0; k < n_points; ++k) {
    double f = n_points == 1 ? 0.0 : (double)k / (n_points - 1);
    int t = (int)std::llround(t_lo * std::pow((double)t_hi / t_lo, f));
    t = std::clamp(t, t_lo, t_hi);
    double y = trace.avg_regret_mean[(size_t)t - 1];
    if (y <= 0) continue;  // regret crossed zero; not usable on a log axis
    double lx = std::log((double)t), ly = std::log(y);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++n;
  }
  if (n < 2) throw ContractError("loglog_slope: not enough positive samples");
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace propel
