#include "propel/loop.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "propel/csv.hpp"
#include "propel/errors.hpp"

namespace fs = std::filesystem;

namespace propel {

void PropelConfig::validate() const {
  if (iterations < 1) throw ConfigError("propel.iterations must be >= 1");
  if (eval.episodes < 1) throw ConfigError("eval.episodes must be >= 1");
  if (!(eval.gamma > 0 && eval.gamma <= 1))
    throw ConfigError("eval.gamma must be in (0,1]");
  update.validate();
  dagger.validate();
}

std::string iteration_dir(const std::string& run_dir, int iteration) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "iter_%03d", iteration);
  return run_dir + "/" + buf;
}

std::string metrics_header() {
  return "# schema=1\n"
         "iter,prog_return_mean,prog_return_std,mixed_return_mean,"
         "mixed_return_std,proj_heldout_mse,update_diverged\n";
}

std::string metrics_row(const IterationRecord& r) {
  std::ostringstream out;
  out << r.iter << "," << format_double(r.prog_return_mean) << ","
      << format_double(r.prog_return_std) << ","
      << format_double(r.mixed_return_mean) << ","
      << format_double(r.mixed_return_std) << ","
      << format_double(r.heldout_mse) << "," << (r.update_diverged ? 1 : 0)
      << "\n";
  return out.str();
}

namespace {

void write_checkpoint(const std::string& run_dir, int iter, const Program& prog,
                      const NeuralParams& theta, const IterationRecord& rec,
                      const UpdateMetrics* upd, const ProjectionMetrics* proj) {
  if (run_dir.empty()) return;
  const std::string dir = iteration_dir(run_dir, iter);
  fs::create_directories(dir);
  save_program(dir + "/program.sexp", prog);
  if (!theta.empty()) save_nn(dir + "/theta.nnp", theta);
  write_text_file(dir + "/metrics.row", metrics_header() + metrics_row(rec));
  if (upd) write_text_file(dir + "/update_metrics.csv", upd->to_csv());
  if (proj) write_text_file(dir + "/projection_metrics.csv", proj->to_csv());
}

struct LoopState {
  Program pi_prev;
  NeuralParams theta_prev;
  Program best_program;
  double best_return = -std::numeric_limits<double>::infinity();
  int best_iteration = 0;
};

PropelResult run_iterations(Env& env, const PropelConfig& cfg,
                            std::uint64_t seed, int first_iter, LoopState st) {
  const EnvSpec& spec = env.spec();
  const Bounds bounds{spec.act_low, spec.act_high};
  const auto eval_seeds = seed_range(cfg.eval.seed0, cfg.eval.episodes);

  PropelResult result;
  std::ostringstream timing;

  auto evaluate = [&](const Policy& p) {
    return mean_return(p, env, eval_seeds, cfg.eval.gamma, cfg.eval.horizon,
                       cfg.workers);
  };

  if (first_iter == 1) {
    auto [m0, s0] = evaluate(ProgramPolicy{st.pi_prev, bounds});
    IterationRecord rec0;
    rec0.iter = 0;
    rec0.prog_return_mean = m0;
    rec0.prog_return_std = s0;
    rec0.mixed_return_mean = m0;
    rec0.mixed_return_std = s0;
    result.records.push_back(rec0);
    st.best_program = st.pi_prev;
    st.best_return = m0;
    st.best_iteration = 0;
    write_checkpoint(cfg.run_dir, 0, st.pi_prev, st.theta_prev, rec0, nullptr,
                     nullptr);
  }

  for (int t = first_iter; t <= cfg.iterations; ++t) {
    auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t update_seed = seed + 1000ull * (std::uint64_t)t;
    const std::uint64_t project_seed = update_seed + 500ull;

    NeuralParams theta_in =
        cfg.warm_start_theta ? st.theta_prev : NeuralParams{};
    auto [mixed, upd_metrics] =
        update_f(st.pi_prev, theta_in, env, cfg.update, update_seed);

    IterationRecord rec;
    rec.iter = t;
    rec.update_diverged = upd_metrics.diverged;

    Program pi_t = st.pi_prev;
    ProjectionMetrics proj_metrics;
    bool have_proj = false;
    if (!upd_metrics.diverged) {
      DaggerConfig dagger = cfg.dagger;
      dagger.workers = cfg.workers;
      auto [prog, pm] = project(mixed, env, dagger, project_seed);
      pi_t = std::move(prog);
      proj_metrics = std::move(pm);
      rec.heldout_mse = proj_metrics.best_heldout_mse;
      have_proj = true;
    }

    auto [pm_mean, pm_std] = evaluate(ProgramPolicy{pi_t, bounds});
    rec.prog_return_mean = pm_mean;
    rec.prog_return_std = pm_std;
    auto [mm_mean, mm_std] = evaluate(Policy{mixed});
    rec.mixed_return_mean = mm_mean;
    rec.mixed_return_std = mm_std;

    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    timing << t << " " << format_double(rec.wall_seconds) << "\n";

    write_checkpoint(cfg.run_dir, t, pi_t, mixed.theta, rec, &upd_metrics,
                     have_proj ? &proj_metrics : nullptr);
    result.records.push_back(rec);

    if (pm_mean > st.best_return) {
      st.best_return = pm_mean;
      st.best_program = pi_t;
      st.best_iteration = t;
    }
    st.pi_prev = std::move(pi_t);
    st.theta_prev = mixed.theta;
  }

  result.best_program = st.best_program;
  result.best_iteration = st.best_iteration;

  if (!cfg.run_dir.empty()) {
    std::ostringstream csv;
    csv << metrics_header();
    for (const auto& r : result.records) csv << metrics_row(r);
    write_text_file(cfg.run_dir + "/metrics.csv", csv.str());
    write_text_file(cfg.run_dir + "/timing.log", timing.str());
    save_program(cfg.run_dir + "/best_program.sexp", result.best_program);
  }
  return result;
}

}  // namespace

PropelResult propel_run(Env env, const Program& pi0, const PropelConfig& cfg,
                        std::uint64_t seed) {
  cfg.validate();
  validate_features(pi0, env.spec().obs_dim);
  if (pi0.act_dim() != env.spec().act_dim)
    throw ContractError("initial program act_dim != env act_dim");
  if (!cfg.run_dir.empty()) fs::create_directories(cfg.run_dir);

  LoopState st;
  st.pi_prev = pi0;
  Rng init_rng = make_rng(seed, 0xAC7);
  st.theta_prev = make_actor(env.spec(), cfg.update, init_rng);
  return run_iterations(env, cfg, seed, 1, std::move(st));
}

PropelResult propel_resume(Env env, const PropelConfig& cfg, std::uint64_t seed,
                           int from_iter) {
  cfg.validate();
  if (cfg.run_dir.empty())
    throw ConfigError("propel_resume needs a run directory");
  auto [prog, theta] = load_checkpoint(cfg.run_dir, from_iter);
  LoopState st;
  st.pi_prev = std::move(prog);
  st.theta_prev = std::move(theta);
  st.best_program = st.pi_prev;
  st.best_iteration = from_iter;
  return run_iterations(env, cfg, seed, from_iter + 1, std::move(st));
}

std::pair<Program, NeuralParams> load_checkpoint(const std::string& run_dir,
                                                 int iteration) {
  const std::string dir = iteration_dir(run_dir, iteration);
  const std::string prog_path = dir + "/program.sexp";
  const std::string theta_path = dir + "/theta.nnp";
  if (!fs::exists(prog_path)) throw IoError("missing checkpoint: " + prog_path);
  Program prog = load_program(prog_path);
  NeuralParams theta;
  if (fs::exists(theta_path)) theta = load_nn(theta_path);
  return {std::move(prog), std::move(theta)};
}

}  // namespace propel
