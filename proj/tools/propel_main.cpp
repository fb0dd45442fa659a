// propel command-line driver: train | project | eval | sandbox | verify.
// Exit codes: 0 success, 2 configuration/parse error, 3 runtime abort.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include <propel/config.hpp>
#include <propel/csv.hpp>
#include <propel/errors.hpp>
#include <propel/loop.hpp>
#include <propel/sandbox.hpp>
#include <propel/verify.hpp>

namespace fs = std::filesystem;
using namespace propel;

namespace {

struct GlobalArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string run_dir;
  int workers = 0;  // 0 = take from config
};

RunConfig load_config(const GlobalArgs& g, bool required) {
  RunConfig cfg;
  if (!g.config_path.empty()) {
    cfg = RunConfig::from_file(g.config_path);
  } else if (required) {
    throw ConfigError("--config PATH is required for this command");
  }
  for (const auto& kv : g.overrides) cfg.apply_override(kv);
  return cfg;
}

Env build_env(RunConfig& cfg, std::uint64_t seed) {
  std::string name = cfg.get_string("env.name", "pendulum");
  std::string track_file = cfg.get_string("env.track_file", "");
  if (name == "track" && !track_file.empty())
    return Env::make_track(TrackSpec::load(track_file), seed);
  return Env::make(name, seed);
}

UpdateConfig build_update(RunConfig& cfg) {
  UpdateConfig u;
  u.steps = cfg.get_int("update.steps", u.steps);
  u.actor_lr = cfg.get_double("update.actor_lr", u.actor_lr);
  u.critic_lr = cfg.get_double("update.critic_lr", u.critic_lr);
  u.gamma = cfg.get_double("update.gamma", u.gamma);
  u.tau = cfg.get_double("update.tau", u.tau);
  u.noise_scale = cfg.get_double("update.noise", u.noise_scale);
  u.batch_size = cfg.get_int("update.batch", u.batch_size);
  u.warmup = cfg.get_int("update.warmup", u.warmup);
  u.buffer_capacity =
      (std::size_t)cfg.get_int("update.buffer", (int)u.buffer_capacity);
  u.hidden = cfg.get_int_list("update.hidden", u.hidden);
  u.lambda = cfg.get_double("update.lambda", u.lambda);
  return u;
}

ClassConfig build_class(RunConfig& cfg) {
  ClassConfig c;
  std::string kind = cfg.get_string("class.kind", "pid");
  if (kind == "pid") {
    c.kind = ClassKind::pid_dsl;
  } else if (kind == "tree") {
    c.kind = ClassKind::tree;
  } else {
    throw ConfigError("class.kind must be pid or tree, got '" + kind + "'");
  }
  c.max_depth = cfg.get_int("class.max_depth", c.max_depth);
  c.min_leaf = cfg.get_int("class.min_leaf", c.min_leaf);
  c.affine_leaves = cfg.get_bool("class.affine_leaves", c.affine_leaves);
  return c;
}

DaggerConfig build_dagger(RunConfig& cfg) {
  DaggerConfig d;
  d.rounds = cfg.get_int("dagger.rounds", d.rounds);
  d.episodes = cfg.get_int("dagger.episodes", d.episodes);
  std::string sched = cfg.get_string("dagger.beta_schedule", "first_only");
  if (sched == "first_only") {
    d.schedule = DaggerConfig::BetaSchedule::first_only;
  } else if (sched == "constant") {
    d.schedule = DaggerConfig::BetaSchedule::constant;
  } else if (sched == "geometric") {
    d.schedule = DaggerConfig::BetaSchedule::geometric;
  } else {
    throw ConfigError("dagger.beta_schedule must be first_only|constant|geometric");
  }
  d.beta_value = cfg.get_double("dagger.beta", d.beta_value);
  d.holdout_frac = cfg.get_double("dagger.holdout", d.holdout_frac);
  d.horizon = cfg.get_int("dagger.horizon", d.horizon);
  d.eval_episodes = cfg.get_int("dagger.eval_episodes", d.eval_episodes);
  d.eval_seed0 = cfg.get_u64("dagger.eval_seed0", d.eval_seed0);
  d.eval_gamma = cfg.get_double("dagger.eval_gamma", d.eval_gamma);
  d.fit = build_class(cfg);
  return d;
}

EvalConfig build_eval(RunConfig& cfg) {
  EvalConfig e;
  e.episodes = cfg.get_int("eval.episodes", e.episodes);
  e.seed0 = cfg.get_u64("eval.seed0", e.seed0);
  e.gamma = cfg.get_double("eval.gamma", e.gamma);
  e.horizon = cfg.get_int("eval.horizon", e.horizon);
  return e;
}

std::string require_run_dir(const GlobalArgs& g, RunConfig& cfg) {
  std::string dir = !g.run_dir.empty() ? g.run_dir : cfg.get_string("run.dir", "");
  if (dir.empty())
    throw ConfigError("a run directory is required (--run-dir or run.dir)");
  return dir;
}

int resolve_workers(const GlobalArgs& g, RunConfig& cfg) {
  int w = cfg.get_int("workers", 1);
  if (g.workers > 0) w = g.workers;
  if (w < 1) throw ConfigError("workers must be >= 1");
  return w;
}

int cmd_train(const GlobalArgs& g) {
  RunConfig cfg = load_config(g, true);
  std::uint64_t seed = cfg.get_u64("seed", 0);
  Env env = build_env(cfg, seed);

  PropelConfig pc;
  pc.iterations = cfg.get_int("propel.iterations", pc.iterations);
  pc.warm_start_theta = cfg.get_bool("propel.warm_start", pc.warm_start_theta);
  pc.update = build_update(cfg);
  pc.dagger = build_dagger(cfg);
  pc.eval = build_eval(cfg);
  pc.workers = resolve_workers(g, cfg);
  pc.run_dir = require_run_dir(g, cfg);

  std::string prog_path = cfg.get_string("init.program", "");
  cfg.finish();
  if (prog_path.empty()) throw ConfigError("init.program is required for train");
  Program pi0 = load_program(prog_path, env.spec().obs_dim - 1);
  fs::create_directories(pc.run_dir);
  write_text_file(pc.run_dir + "/config.copy", cfg.resolved_copy());

  PropelResult result = propel_run(env, pi0, pc, seed);
  std::cout << "best_iteration=" << result.best_iteration
            << " best_return=" << format_double(
                   result.records[(size_t)0].prog_return_mean)
            << "\n";
  // report the best row explicitly
  for (const auto& r : result.records)
    if (r.iter == result.best_iteration)
      std::cout << "best_program_return=" << format_double(r.prog_return_mean)
                << " run_dir=" << pc.run_dir << "\n";
  return 0;
}

int cmd_project(const GlobalArgs& g, const std::string& expert_dir,
                const std::string& program_path, const std::string& theta_path,
                double lambda) {
  RunConfig cfg = load_config(g, true);
  std::uint64_t seed = cfg.get_u64("seed", 0);
  Env env = build_env(cfg, seed);
  DaggerConfig dagger = build_dagger(cfg);
  dagger.workers = resolve_workers(g, cfg);
  std::string run_dir = require_run_dir(g, cfg);
  cfg.finish();

  MixedPolicy expert;
  expert.bounds = {env.spec().act_low, env.spec().act_high};
  expert.lambda = lambda;
  if (!expert_dir.empty()) {
    fs::path dir(expert_dir);
    expert.program =
        load_program((dir / "program.sexp").string(), env.spec().obs_dim - 1);
    if (fs::exists(dir / "theta.nnp"))
      expert.theta = load_nn((dir / "theta.nnp").string());
  } else {
    if (program_path.empty())
      throw ConfigError("project needs --expert-dir or --program");
    expert.program = load_program(program_path, env.spec().obs_dim - 1);
    if (!theta_path.empty()) expert.theta = load_nn(theta_path);
  }
  if (expert.theta.empty()) expert.lambda = 0.0;

  fs::create_directories(run_dir);
  write_text_file(run_dir + "/config.copy", cfg.resolved_copy());

  ImitationDataset dataset;
  auto [program, metrics] = project(expert, env, dagger, seed, &dataset);
  dataset.dump_csv(run_dir + "/dataset.csv");
  write_text_file(run_dir + "/projection_metrics.csv", metrics.to_csv());
  save_program(run_dir + "/program.sexp", program);

  double dist = probe_distance(expert.program, program, env.spec(), 1000,
                               mix_seed(seed, 0x9B0));
  std::cout << "best_round=" << metrics.best_round
            << " heldout_mse=" << format_double(metrics.best_heldout_mse)
            << " probe_distance=" << format_double(dist) << "\n";
  return 0;
}

int cmd_eval(const GlobalArgs& g, const std::string& program_path,
             const std::string& env_name, int episodes,
             const std::string& seeds_csv, std::uint64_t seed0, double gamma,
             int horizon) {
  RunConfig cfg = load_config(g, false);
  Env env = env_name == "track" && cfg.has("env.track_file")
                ? Env::make_track(
                      TrackSpec::load(cfg.get_string("env.track_file", "")), 0)
                : Env::make(env_name, 0);
  int workers = resolve_workers(g, cfg);
  cfg.finish();

  Program prog = load_program(program_path, env.spec().obs_dim - 1);
  std::vector<std::uint64_t> seeds;
  if (!seeds_csv.empty()) {
    for (const auto& part : split_list(seeds_csv))
      seeds.push_back(std::stoull(part));
  } else {
    seeds = seed_range(seed0, episodes);
  }
  Policy policy = ProgramPolicy{prog, {env.spec().act_low, env.spec().act_high}};
  auto [mean, std] = mean_return(policy, env, seeds, gamma, horizon, workers);
  std::cout << "mean=" << format_double(mean) << " std=" << format_double(std)
            << " n=" << seeds.size() << "\n";
  return 0;
}

int cmd_sandbox(const GlobalArgs& g) {
  RunConfig cfg = load_config(g, true);
  std::string run_dir = require_run_dir(g, cfg);

  MdConfig base;
  base.dim = cfg.get_int("sandbox.dim", base.dim);
  base.iterations = cfg.get_int("sandbox.iters", base.iterations);
  std::string sched = cfg.get_string("sandbox.step_schedule", "constant");
  if (sched == "constant") {
    base.schedule = MdConfig::StepSchedule::constant;
  } else if (sched == "inv_sqrt") {
    base.schedule = MdConfig::StepSchedule::inv_sqrt;
  } else {
    throw ConfigError("sandbox.step_schedule must be constant|inv_sqrt");
  }
  base.step_c = cfg.get_double("sandbox.step_c", base.step_c);
  auto lo = cfg.get_list("sandbox.box_lo", {-1.0});
  auto hi = cfg.get_list("sandbox.box_hi", {1.0});
  auto expand = [&](std::vector<double> v) {
    if ((int)v.size() == 1) v.assign((size_t)base.dim, v[0]);
    if ((int)v.size() != base.dim)
      throw ConfigError("sandbox box lists must have 1 or dim entries");
    return Eigen::Map<Vec>(v.data(), (long)v.size()).eval();
  };
  base.box_lo = expand(lo);
  base.box_hi = expand(hi);
  auto target = cfg.get_list("sandbox.target", {0.0});
  base.target = expand(target);
  auto start = cfg.get_list("sandbox.start", {});
  if (!start.empty()) base.start = expand(start);
  auto diag = cfg.get_list("sandbox.scale_diag", {});
  if (!diag.empty()) {
    Vec d = expand(diag);
    base.scale = d.asDiagonal();
  }
  base.seed = cfg.get_u64("seed", 0);
  base.repeats = cfg.get_int("sandbox.repeats", base.repeats);
  base.workers = resolve_workers(g, cfg);
  int stride = cfg.get_int("sandbox.trace_stride", 1);

  auto betas = cfg.get_list("sandbox.beta", {0.0});
  auto sigmas = cfg.get_list("sandbox.sigma", {0.0});
  auto epss = cfg.get_list("sandbox.eps", {0.0});
  cfg.finish();

  fs::create_directories(run_dir);
  write_text_file(run_dir + "/config.copy", cfg.resolved_copy());

  CsvWriter manifest(run_dir + "/manifest.csv",
                     {"file", "beta", "sigma", "eps", "final_avg_regret",
                      "final_loss_mean"});
  int bi = 0;
  for (double beta : betas) {
    int si = 0;
    for (double sigma : sigmas) {
      int ei = 0;
      for (double eps : epss) {
        MdConfig point = base;
        point.bias_norm = beta;
        point.noise_std = sigma;
        point.proj_error = eps;
        RegretTrace trace = run_approx_pgd(point);
        std::string file = "trace_b" + std::to_string(bi) + "_s" +
                           std::to_string(si) + "_e" + std::to_string(ei) +
                           ".csv";
        trace.write_csv(run_dir + "/" + file, stride);
        manifest.append_row_raw({file, format_double(beta),
                                 format_double(sigma), format_double(eps),
                                 format_double(trace.final_avg_regret()),
                                 format_double(trace.loss_mean.back())});
        std::cout << "beta=" << format_double(beta)
                  << " sigma=" << format_double(sigma)
                  << " eps=" << format_double(eps) << " final_avg_regret="
                  << format_double(trace.final_avg_regret()) << "\n";
        ++ei;
      }
      ++si;
    }
    ++bi;
  }
  manifest.flush();
  return 0;
}

int cmd_verify(const GlobalArgs& g, const std::string& program_path,
               const std::string& box_path, double dt,
               const std::string& out_csv) {
  RunConfig cfg = load_config(g, false);
  cfg.finish();
  Program prog = load_program(program_path);
  ObsBox box = ObsBox::load(box_path);
  VerifyReport report = verify_program(prog, box, dt);
  std::cout << report.render_text();
  if (!out_csv.empty()) write_text_file(out_csv, report.render_csv());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"programmatic RL: alternating policy-gradient updates and "
               "imitation-based projection onto symbolic controllers"};
  app.require_subcommand(1);

  GlobalArgs g;
  app.add_option("--config", g.config_path, "key=value configuration file");
  app.add_option("--set", g.overrides, "override KEY=VALUE (repeatable)");
  app.add_option("--run-dir", g.run_dir, "output directory for this run");
  app.add_option("--workers", g.workers, "parallel rollout/repeat workers");

  auto* train = app.add_subcommand("train", "run the full training loop");

  auto* project_cmd =
      app.add_subcommand("project", "project a mixed policy onto the program class");
  std::string expert_dir, program_path, theta_path;
  double lambda = 1.0;
  project_cmd->add_option("--expert-dir", expert_dir,
                          "checkpoint directory (program.sexp + theta.nnp)");
  project_cmd->add_option("--program", program_path, "expert program file");
  project_cmd->add_option("--theta", theta_path, "expert neural params file");
  project_cmd->add_option("--lambda", lambda, "neural residual weight");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a program file");
  std::string eval_program, eval_env = "pendulum", seeds_csv;
  int episodes = 10, horizon = 0;
  std::uint64_t seed0 = 0;
  double gamma = 1.0;
  eval_cmd->add_option("program", eval_program, "program file")->required();
  eval_cmd->add_option("env", eval_env, "pendulum | mountain_car | track")
      ->required();
  eval_cmd->add_option("--episodes", episodes, "episode count");
  eval_cmd->add_option("--seeds", seeds_csv, "explicit comma-separated seeds");
  eval_cmd->add_option("--seed0", seed0, "first seed when --seeds is absent");
  eval_cmd->add_option("--gamma", gamma, "discount for reported returns");
  eval_cmd->add_option("--horizon", horizon, "rollout cap (0 = env max)");

  auto* sandbox_cmd =
      app.add_subcommand("sandbox", "approximate-gradient descent regret runs");

  auto* verify_cmd = app.add_subcommand("verify", "range/smoothness certificates");
  std::string verify_program_path, box_path, out_csv;
  double dt = 0.05;
  verify_cmd->add_option("program", verify_program_path, "program file")
      ->required();
  verify_cmd->add_option("box", box_path, "observation box file")->required();
  verify_cmd->add_option("--dt", dt, "controller step size");
  verify_cmd->add_option("--out", out_csv, "write the CSV report here");

  try {
    app.parse(argc, argv);
    if (train->parsed()) return cmd_train(g);
    if (project_cmd->parsed())
      return cmd_project(g, expert_dir, program_path, theta_path, lambda);
    if (eval_cmd->parsed())
      return cmd_eval(g, eval_program, eval_env, episodes, seeds_csv, seed0,
                      gamma, horizon);
    if (sandbox_cmd->parsed()) return cmd_sandbox(g);
    if (verify_cmd->parsed())
      return cmd_verify(g, verify_program_path, box_path, dt, out_csv);
    return 2;
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
