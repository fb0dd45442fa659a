#include "propel/project.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <sstream>

#include "propel/csv.hpp"
#include "propel/errors.hpp"

namespace propel {

void ImitationDataset::append(std::vector<ImitationRow> more) {
  for (auto& r : more) {
    if (r.obs.size() != obs_dim || r.label.size() != act_dim ||
        (int)r.context.size() != pid_slots)
      throw ContractError("imitation row with inconsistent dimensions");
    rows.push_back(std::move(r));
  }
}

void ImitationDataset::dump_csv(const std::string& path) const {
  std::vector<std::string> cols;
  for (int i = 0; i < obs_dim; ++i) cols.push_back("obs_" + std::to_string(i));
  for (int j = 0; j < pid_slots; ++j) {
    cols.push_back("pid" + std::to_string(j) + "_e");
    cols.push_back("pid" + std::to_string(j) + "_i");
    cols.push_back("pid" + std::to_string(j) + "_d");
  }
  for (int d = 0; d < act_dim; ++d) cols.push_back("act_" + std::to_string(d));
  cols.push_back("round");
  CsvWriter writer(path, cols);
  for (const auto& r : rows) {
    std::vector<double> cells;
    for (int i = 0; i < obs_dim; ++i) cells.push_back(r.obs[i]);
    for (const auto& c : r.context) {
      cells.push_back(c.error);
      cells.push_back(c.integral);
      cells.push_back(c.deriv);
    }
    for (int d = 0; d < act_dim; ++d) cells.push_back(r.label[d]);
    cells.push_back((double)r.round);
    writer.append_row(cells);
  }
  writer.flush();
}

void DaggerConfig::validate() const {
  if (rounds < 1) throw ConfigError("dagger.rounds must be >= 1");
  if (episodes < 1) throw ConfigError("dagger.episodes must be >= 1");
  if (!(holdout_frac >= 0.0 && holdout_frac < 1.0))
    throw ConfigError("dagger.holdout must be in [0, 1)");
  if (!(beta_value >= 0.0 && beta_value <= 1.0))
    throw ConfigError("dagger.beta must be in [0, 1]");
  double prev = 2.0;
  for (int k = 1; k <= rounds; ++k) {
    double b = beta(k);
    if (b > prev + 1e-12)
      throw ConfigError("dagger beta schedule must be non-increasing");
    prev = b;
  }
}

double DaggerConfig::beta(int round) const {
  switch (schedule) {
    case BetaSchedule::first_only:
      return round == 1 ? 1.0 : 0.0;
    case BetaSchedule::constant:
      return beta_value;
    case BetaSchedule::geometric:
      return std::pow(beta_value, round - 1);
  }
  return 0.0;
}

std::vector<ImitationRow> collect_round(const MixedPolicy& expert,
                                        const Program& learner, Env& env,
                                        double beta_k, int episodes,
                                        int horizon, std::uint64_t seed,
                                        int round_tag) {
  if (!(beta_k >= 0.0 && beta_k <= 1.0))
    throw ContractError("collect_round: beta must be in [0, 1]");
  if (horizon <= 0) horizon = env.spec().max_horizon;
  const double dt = env.spec().dt;
  const Bounds bounds{env.spec().act_low, env.spec().act_high};
  Policy expert_policy = expert;

  std::vector<Eigen::VectorXd> learner_params;
  for (int d = 0; d < learner.act_dim(); ++d)
    learner_params.push_back(free_params(learner, d));

  Rng coin_rng = make_rng(seed, 0xC01);
  std::uniform_real_distribution<double> uni01(0.0, 1.0);

  std::vector<ImitationRow> rows;
  for (int ep = 0; ep < episodes; ++ep) {
    Vec obs = env.reset(mix_seed(seed, 0xE0 + (std::uint64_t)ep));
    ProgState expert_state = make_policy_state(expert_policy);
    ProgState learner_state = make_state(learner);
    for (int t = 0; t < horizon && !env.done(); ++t) {
      // learner context + design coefficients at the visited state
      StepLinearization lin = linearize_step(learner, learner_state, obs, dt);
      Vec learner_action(learner.act_dim());
      for (int d = 0; d < learner.act_dim(); ++d)
        learner_action[d] = lin.fixed[d] + lin.coeffs[d].dot(learner_params[d]);
      learner_action =
          learner_action.cwiseMax(bounds.low).cwiseMin(bounds.high);

      Vec expert_raw = policy_act_raw(expert_policy, obs, expert_state, dt);
      Vec expert_action = expert_raw.cwiseMax(bounds.low).cwiseMin(bounds.high);

      ImitationRow row;
      row.obs = obs;
      row.context = lin.pid_context;
      row.label = expert_raw;
      row.round = round_tag;
      rows.push_back(std::move(row));

      bool use_expert = uni01(coin_rng) < beta_k;
      StepResult sr = env.step(use_expert ? expert_action : learner_action);
      obs = sr.obs;
    }
  }
  return rows;
}

namespace {

// Tree learners have no pid context and act statelessly on the observation.
std::vector<ImitationRow> collect_round_tree(const MixedPolicy& expert,
                                             const Program& learner, Env& env,
                                             double beta_k, int episodes,
                                             int horizon, std::uint64_t seed,
                                             int round_tag) {
  if (horizon <= 0) horizon = env.spec().max_horizon;
  const double dt = env.spec().dt;
  const Bounds bounds{env.spec().act_low, env.spec().act_high};
  Policy expert_policy = expert;
  Policy learner_policy = ProgramPolicy{learner, bounds};

  Rng coin_rng = make_rng(seed, 0xC01);
  std::uniform_real_distribution<double> uni01(0.0, 1.0);

  std::vector<ImitationRow> rows;
  for (int ep = 0; ep < episodes; ++ep) {
    Vec obs = env.reset(mix_seed(seed, 0xE0 + (std::uint64_t)ep));
    ProgState expert_state = make_policy_state(expert_policy);
    ProgState learner_state = make_policy_state(learner_policy);
    for (int t = 0; t < horizon && !env.done(); ++t) {
      Vec expert_raw = policy_act_raw(expert_policy, obs, expert_state, dt);
      Vec expert_action = expert_raw.cwiseMax(bounds.low).cwiseMin(bounds.high);
      Vec learner_action = policy_act(learner_policy, obs, learner_state, dt);
      rows.push_back({obs, {}, expert_raw, round_tag});
      bool use_expert = uni01(coin_rng) < beta_k;
      StepResult sr = env.step(use_expert ? expert_action : learner_action);
      obs = sr.obs;
    }
  }
  return rows;
}

size_t count_selected(const std::vector<char>& mask, size_t n) {
  if (mask.empty()) return n;
  size_t c = 0;
  for (char m : mask)
    if (m) ++c;
  return c;
}

}  // namespace

FitPidResult fit_pid(const ImitationDataset& data, const Program& templ,
                     const std::vector<char>& row_mask) {
  if (data.rows.empty()) throw ContractError("fit_pid: empty dataset");
  if (!row_mask.empty() && row_mask.size() != data.rows.size())
    throw ContractError("fit_pid: row mask size mismatch");
  if (templ.act_dim() != data.act_dim)
    throw ContractError("fit_pid: template act_dim != dataset act_dim");
  if (pid_slot_count(templ) != data.pid_slots)
    throw ContractError("fit_pid: template pid slots != dataset pid slots");

  const size_t n = count_selected(row_mask, data.rows.size());
  if (n == 0) throw ContractError("fit_pid: no training rows selected");

  const int act_dim = templ.act_dim();
  std::vector<Eigen::MatrixXd> A((size_t)act_dim);
  std::vector<Eigen::VectorXd> rhs((size_t)act_dim);
  for (int d = 0; d < act_dim; ++d) {
    A[(size_t)d].resize((long)n, free_param_count(templ, d));
    rhs[(size_t)d].resize((long)n);
  }
  long r = 0;
  for (size_t i = 0; i < data.rows.size(); ++i) {
    if (!row_mask.empty() && !row_mask[i]) continue;
    const ImitationRow& row = data.rows[i];
    StepLinearization lin = linearize_with_context(templ, row.obs, row.context);
    for (int d = 0; d < act_dim; ++d) {
      A[(size_t)d].row(r) = lin.coeffs[d].transpose();
      rhs[(size_t)d][r] = row.label[d] - lin.fixed[d];
    }
    ++r;
  }

  std::vector<Eigen::VectorXd> fitted;
  double sse = 0.0;
  for (int d = 0; d < act_dim; ++d) {
    Eigen::VectorXd sol;
    if (A[(size_t)d].cols() == 0) {
      sol = Eigen::VectorXd();
      sse += rhs[(size_t)d].squaredNorm();
    } else {
      sol = A[(size_t)d]
                .bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV)
                .solve(rhs[(size_t)d]);
      sse += (rhs[(size_t)d] - A[(size_t)d] * sol).squaredNorm();
    }
    fitted.push_back(sol);
  }

  FitPidResult result;
  result.program = with_free_params(templ, fitted);
  result.train_mse = sse / (double)(n * (size_t)act_dim);
  return result;
}

double imitation_mse(const ImitationDataset& data, const Program& candidate,
                     const std::vector<char>& row_mask) {
  if (!row_mask.empty() && row_mask.size() != data.rows.size())
    throw ContractError("imitation_mse: row mask size mismatch");
  double sse = 0.0;
  size_t count = 0;
  const bool tree_like = data.pid_slots == 0 && pid_slot_count(candidate) == 0;
  std::vector<Eigen::VectorXd> params;
  if (!tree_like)
    for (int d = 0; d < candidate.act_dim(); ++d)
      params.push_back(free_params(candidate, d));
  for (size_t i = 0; i < data.rows.size(); ++i) {
    if (!row_mask.empty() && !row_mask[i]) continue;
    const ImitationRow& row = data.rows[i];
    Vec pred(candidate.act_dim());
    if (tree_like) {
      ProgState state = make_state(candidate);
      pred = eval_step(candidate, state, row.obs, 1.0);
    } else {
      StepLinearization lin = linearize_with_context(candidate, row.obs, row.context);
      for (int d = 0; d < candidate.act_dim(); ++d)
        pred[d] = lin.fixed[d] + lin.coeffs[d].dot(params[(size_t)d]);
    }
    sse += (pred - row.label).squaredNorm();
    count += (size_t)candidate.act_dim();
  }
  if (count == 0) throw ContractError("imitation_mse: no rows selected");
  return sse / (double)count;
}

std::string ProjectionMetrics::to_csv() const {
  std::ostringstream out;
  out << "# schema=1\n";
  out << "round,rows_total,beta,train_mse,heldout_mse,prog_return_mean,prog_return_std,is_best\n";
  for (const auto& r : rounds)
    out << r.round << "," << r.rows_total << "," << format_double(r.beta) << ","
        << format_double(r.train_mse) << "," << format_double(r.heldout_mse)
        << "," << format_double(r.prog_return_mean) << ","
        << format_double(r.prog_return_std) << ","
        << (r.round == best_round ? 1 : 0) << "\n";
  return out.str();
}

std::pair<Program, ProjectionMetrics> project(const MixedPolicy& expert, Env env,
                                              const DaggerConfig& cfg,
                                              std::uint64_t seed,
                                              ImitationDataset* dataset_out) {
  cfg.validate();
  const EnvSpec& spec = env.spec();
  const bool tree_class = cfg.fit.kind == ClassKind::tree;

  ImitationDataset data;
  data.obs_dim = spec.obs_dim;
  data.act_dim = spec.act_dim;

  Program templ = expert.program;  // pid class: the expert's own structure
  validate_features(templ, spec.obs_dim);
  data.pid_slots = tree_class ? 0 : pid_slot_count(templ);

  Program learner = templ;
  if (tree_class && pid_slot_count(templ) > 0) {
    // start the tree class from a null program when the expert's program
    // is not itself a tree
    Program zero;
    for (int d = 0; d < spec.act_dim; ++d) {
      auto leaf = std::make_shared<TreeNode>();
      auto e = std::make_shared<Expr>();
      e->kind = NodeKind::kTree;
      e->tree = leaf;
      zero.dims.push_back(e);
    }
    learner = zero;
  }

  std::vector<char> train_mask;  // parallel to data.rows; 1 = train, 0 = held out
  std::vector<Program> candidates;
  ProjectionMetrics metrics;

  for (int k = 1; k <= cfg.rounds; ++k) {
    double beta_k = cfg.beta(k);
    std::vector<ImitationRow> rows =
        tree_class
            ? collect_round_tree(expert, learner, env, beta_k, cfg.episodes,
                                 cfg.horizon, mix_seed(seed, (std::uint64_t)k), k)
            : collect_round(expert, learner, env, beta_k, cfg.episodes,
                            cfg.horizon, mix_seed(seed, (std::uint64_t)k), k);

    size_t n_new = rows.size();
    size_t n_train = n_new - (size_t)std::floor(cfg.holdout_frac * (double)n_new);
    for (size_t i = 0; i < n_new; ++i) train_mask.push_back(i < n_train ? 1 : 0);
    data.append(std::move(rows));

    double train_mse = 0.0;
    if (tree_class) {
      size_t n_sel = 0;
      for (char m : train_mask) n_sel += (size_t)m;
      Eigen::MatrixXd X((long)n_sel, spec.obs_dim);
      Eigen::MatrixXd Y((long)n_sel, spec.act_dim);
      long r = 0;
      for (size_t i = 0; i < data.rows.size(); ++i) {
        if (!train_mask[i]) continue;
        X.row(r) = data.rows[i].obs.transpose();
        Y.row(r) = data.rows[i].label.transpose();
        ++r;
      }
      TreeFitResult tf = fit_tree(X, Y, cfg.fit);
      learner = tf.program;
      train_mse = tf.sse / (double)(n_sel * (size_t)spec.act_dim);
    } else {
      FitPidResult fit = fit_pid(data, templ, train_mask);
      learner = fit.program;
      train_mse = fit.train_mse;
    }
    candidates.push_back(learner);

    auto eval_seeds = seed_range(cfg.eval_seed0, cfg.eval_episodes);
    Policy prog_policy = ProgramPolicy{learner, {spec.act_low, spec.act_high}};
    auto [ret_mean, ret_std] =
        mean_return(prog_policy, env, eval_seeds, cfg.eval_gamma, cfg.horizon,
                    cfg.workers);

    metrics.rounds.push_back(
        {k, data.rows.size(), beta_k, train_mse, 0.0, ret_mean, ret_std});
  }

  // Round-best selection on the final held-out set so MSEs are comparable.
  std::vector<char> held_mask(train_mask.size());
  bool any_held = false;
  for (size_t i = 0; i < train_mask.size(); ++i) {
    held_mask[i] = train_mask[i] ? 0 : 1;
    any_held = any_held || held_mask[i];
  }
  const std::vector<char>& mse_mask = any_held ? held_mask : train_mask;
  int best = 0;
  double best_mse = std::numeric_limits<double>::infinity();
  for (size_t c = 0; c < candidates.size(); ++c) {
    double mse = imitation_mse(data, candidates[c], mse_mask);
    metrics.rounds[c].heldout_mse = mse;
    if (mse < best_mse) {  // strict: ties go to the earliest round
      best_mse = mse;
      best = (int)c;
    }
  }
  metrics.best_round = best + 1;
  metrics.best_heldout_mse = best_mse;

  if (dataset_out) *dataset_out = std::move(data);
  return {candidates[(size_t)best], metrics};
}

double probe_distance(const Program& a, const Program& b, const EnvSpec& spec,
                      int n_probes, std::uint64_t seed, int probe_len) {
  if (a.act_dim() != b.act_dim())
    throw ContractError("probe_distance: action dimension mismatch");
  if (spec.obs_low.size() != spec.obs_dim)
    throw ContractError("probe_distance: spec has no observation ranges");
  Rng rng = make_rng(seed, 0x9B0);
  std::uniform_real_distribution<double> uni01(0.0, 1.0);
  double dist = 0.0;
  for (int i = 0; i < n_probes; ++i) {
    ProgState sa = make_state(a), sb = make_state(b);
    for (int t = 0; t < probe_len; ++t) {
      Vec obs(spec.obs_dim);
      for (int j = 0; j < spec.obs_dim; ++j)
        obs[j] = spec.obs_low[j] +
                 (spec.obs_high[j] - spec.obs_low[j]) * uni01(rng);
      Vec ua = eval_step(a, sa, obs, spec.dt)
                   .cwiseMax(spec.act_low)
                   .cwiseMin(spec.act_high);
      Vec ub = eval_step(b, sb, obs, spec.dt)
                   .cwiseMax(spec.act_low)
                   .cwiseMin(spec.act_high);
      dist = std::max(dist, (ua - ub).cwiseAbs().maxCoeff());
    }
  }
  return dist;
}

}  // namespace propel
