#include "propel/update.hpp"

#include <cmath>
#include <sstream>

#include "propel/csv.hpp"
#include "propel/errors.hpp"

namespace propel {

void UpdateConfig::validate() const {
  if (steps < 0) throw ConfigError("update.steps must be >= 0");
  if (!(actor_lr > 0) || !(critic_lr > 0))
    throw ConfigError("update learning rates must be > 0");
  if (!(gamma > 0 && gamma <= 1)) throw ConfigError("update.gamma must be in (0,1]");
  if (!(tau > 0 && tau <= 1)) throw ConfigError("update.tau must be in (0,1]");
  if (noise_scale < 0) throw ConfigError("update.noise must be >= 0");
  if (batch_size < 1) throw ConfigError("update.batch must be >= 1");
  if (warmup < 0) throw ConfigError("update.warmup must be >= 0");
  if (buffer_capacity == 0) throw ConfigError("update.buffer must be > 0");
  if (!(lambda >= 0 && lambda <= 1)) throw ConfigError("update.lambda must be in [0,1]");
  for (int h : hidden)
    if (h < 1) throw ConfigError("update.hidden sizes must be >= 1");
}

std::string UpdateMetrics::to_csv() const {
  std::ostringstream out;
  out << "# schema=1\n";
  out << "episode,env_steps,return,critic_loss,actor_q\n";
  for (const auto& e : episodes)
    out << e.episode << "," << e.env_steps << "," << format_double(e.ret) << ","
        << format_double(e.critic_loss) << "," << format_double(e.actor_q) << "\n";
  return out.str();
}

NeuralParams make_actor(const EnvSpec& spec, const UpdateConfig& cfg, Rng& rng) {
  return make_mlp(spec.obs_dim, cfg.hidden, spec.act_dim, OutputKind::tanh_scaled,
                  rng, spec.act_low, spec.act_high);
}

NeuralParams make_critic(const EnvSpec& spec, const UpdateConfig& cfg, Rng& rng) {
  return make_mlp(spec.obs_dim + spec.act_dim, cfg.hidden, 1, OutputKind::linear,
                  rng);
}

namespace {

Vec concat(const Vec& a, const Vec& b) {
  Vec out(a.size() + b.size());
  out << a, b;
  return out;
}

}  // namespace

std::pair<MixedPolicy, UpdateMetrics> update_f(const Program& program,
                                               const NeuralParams& theta0,
                                               Env env, const UpdateConfig& cfg,
                                               std::uint64_t seed) {
  cfg.validate();
  const EnvSpec& spec = env.spec();
  validate_features(program, spec.obs_dim);

  MixedPolicy result;
  result.program = program;
  result.lambda = cfg.lambda;
  result.bounds = {spec.act_low, spec.act_high};

  UpdateMetrics metrics;
  if (cfg.steps == 0) {  // no-op budget: theta bit-identical to theta0
    result.theta = theta0;
    return {result, metrics};
  }

  Rng rng = make_rng(seed, 0x0DD);
  NeuralParams actor = theta0.empty() ? make_actor(spec, cfg, rng) : theta0;
  NeuralParams critic = make_critic(spec, cfg, rng);
  NeuralParams actor_target = actor;
  NeuralParams critic_target = critic;
  AdamOptimizer actor_opt(cfg.actor_lr);
  AdamOptimizer critic_opt(cfg.critic_lr);
  ReplayBuffer replay(cfg.buffer_capacity);

  NeuralParams snapshot = actor;  // last finite end-of-episode checkpoint
  std::uniform_real_distribution<double> uni01(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Vec obs = env.reset(mix_seed(seed, 0xEB));
  ProgState prog_state = make_state(program);
  Vec pi_s = eval_step(program, prog_state, obs, spec.dt);

  int episode = 0;
  double ep_return = 0.0;
  double ep_loss_sum = 0.0, ep_q_sum = 0.0;
  int ep_grad_steps = 0;
  const size_t train_floor = std::max<size_t>((size_t)cfg.warmup, (size_t)cfg.batch_size);

  auto diverge = [&](const std::string& why) {
    metrics.diverged = true;
    metrics.divergence_reason = why;
    result.theta = snapshot;
  };

  for (int step = 0; step < cfg.steps; ++step) {
    // act
    Vec a_exec(spec.act_dim);
    if (replay.size() < (size_t)cfg.warmup) {
      for (int d = 0; d < spec.act_dim; ++d)
        a_exec[d] = spec.act_low[d] +
                    (spec.act_high[d] - spec.act_low[d]) * uni01(rng);
    } else {
      Vec residual = nn_forward(actor, obs);
      Vec noise(spec.act_dim);
      for (int d = 0; d < spec.act_dim; ++d)
        noise[d] = cfg.noise_scale * gauss(rng);
      a_exec = (pi_s + cfg.lambda * residual + noise)
                   .cwiseMax(spec.act_low)
                   .cwiseMin(spec.act_high);
    }

    StepResult sr = env.step(a_exec);
    ep_return += sr.reward;

    // peek pi(s') with the live accumulator trajectory
    ProgState next_state = prog_state;
    Vec pi_next = eval_step(program, next_state, sr.obs, spec.dt);
    replay.push({obs, a_exec, sr.reward, sr.obs, sr.done, pi_s, pi_next});

    // learn
    if (replay.size() >= train_floor) {
      const auto idx = replay.sample_indices((size_t)cfg.batch_size, rng);
      const double inv_b = 1.0 / (double)cfg.batch_size;

      // critic: MSE against the bootstrapped target
      NnGrads critic_grads = NnGrads::zeros_like(critic);
      double critic_loss = 0.0;
      for (size_t i : idx) {
        const Transition& tr = replay.at(i);
        Vec a2 = (tr.pi_next + cfg.lambda * nn_forward(actor_target, tr.s_next))
                     .cwiseMax(spec.act_low)
                     .cwiseMin(spec.act_high);
        double q2 = nn_forward(critic_target, concat(tr.s_next, a2))[0];
        double y = tr.r + cfg.gamma * (tr.done ? 0.0 : 1.0) * q2;
        ForwardTrace trace;
        Vec in = concat(tr.s, tr.a);
        double q = nn_forward_traced(critic, in, &trace)[0];
        double err = q - y;
        critic_loss += err * err * inv_b;
        Vec upstream(1);
        upstream[0] = 2.0 * err * inv_b;
        nn_backward(critic, in, trace, upstream, &critic_grads);
      }
      critic_opt.step(&critic, critic_grads);

      // actor: ascend Q(s, clip(pi + lambda * nn(s))); gradient only
      // through the residual, gated where the sum saturates
      NnGrads actor_grads = NnGrads::zeros_like(actor);
      double actor_q = 0.0;
      for (size_t i : idx) {
        const Transition& tr = replay.at(i);
        ForwardTrace atrace;
        Vec residual = nn_forward_traced(actor, tr.s, &atrace);
        Vec pre = tr.pi_s + cfg.lambda * residual;
        Vec a = pre.cwiseMax(spec.act_low).cwiseMin(spec.act_high);
        ForwardTrace qtrace;
        Vec in = concat(tr.s, a);
        double q = nn_forward_traced(critic, in, &qtrace)[0];
        actor_q += q * inv_b;
        NnGrads scratch = NnGrads::zeros_like(critic);
        Vec upstream(1);
        upstream[0] = 1.0;
        Vec dq_din = nn_backward(critic, in, qtrace, upstream, &scratch);
        Vec dq_da = dq_din.tail(spec.act_dim);
        Vec gate(spec.act_dim);
        for (int d = 0; d < spec.act_dim; ++d)
          gate[d] = (pre[d] > spec.act_low[d] && pre[d] < spec.act_high[d]) ? 1.0 : 0.0;
        Vec up_actor = (-inv_b * cfg.lambda) * gate.cwiseProduct(dq_da);
        nn_backward(actor, tr.s, atrace, up_actor, &actor_grads);
      }
      actor_opt.step(&actor, actor_grads);

      soft_update(&actor_target, actor, cfg.tau);
      soft_update(&critic_target, critic, cfg.tau);

      ep_loss_sum += critic_loss;
      ep_q_sum += actor_q;
      ++ep_grad_steps;
      metrics.final_critic_loss = critic_loss;

      if (!std::isfinite(critic_loss) || critic_loss > cfg.divergence_loss ||
          !std::isfinite(actor_q)) {
        diverge("critic loss " + format_double(critic_loss) + " at step " +
                std::to_string(step));
        metrics.steps_done = step + 1;
        return {result, metrics};
      }
    }

    metrics.steps_done = step + 1;
    if (sr.done) {
      metrics.episodes.push_back(
          {episode, metrics.steps_done, ep_return,
           ep_grad_steps ? ep_loss_sum / ep_grad_steps : 0.0,
           ep_grad_steps ? ep_q_sum / ep_grad_steps : 0.0});
      ++episode;
      ep_return = 0.0;
      ep_loss_sum = ep_q_sum = 0.0;
      ep_grad_steps = 0;
      snapshot = actor;
      obs = env.reset();
      prog_state = make_state(program);
      pi_s = eval_step(program, prog_state, obs, spec.dt);
    } else {
      obs = sr.obs;
      prog_state = std::move(next_state);
      pi_s = pi_next;
    }
  }

  result.theta = actor;
  return {result, metrics};
}

}  // namespace propel
