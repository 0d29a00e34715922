// SPDX-License-Identifier: Apache-2.0
#include "diffil/train/trainer.hpp"

#include "diffil/errors.hpp"
#include "diffil/train/expert.hpp"
#include "diffil/train/optim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <thread>

namespace diffil::train {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

ad::Tensor start_batch(const envs::Env& env, int batch) {
  const Eigen::VectorXd s0 = env.initial_state();
  ad::Vector flat(batch * s0.size());
  for (int b = 0; b < batch; ++b) flat.segment(b * s0.size(), s0.size()) = s0;
  return ad::Tensor({batch, s0.size()}, std::move(flat));
}

EvalStats summarize(std::vector<double> scores) {
  EvalStats s;
  const double n = static_cast<double>(scores.size());
  // Offsets from the first score keep identical scores exact.
  const double ref = scores.front();
  for (double v : scores) s.mean += v - ref;
  s.mean = ref + s.mean / n;
  double var = 0.0;
  for (double v : scores) var += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(var / n);
  s.scores = std::move(scores);
  return s;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) { return splitmix64(splitmix64(a) ^ (b + 0x632be59bd9b4e019ULL)); }

std::vector<Eigen::VectorXd> policy_noise(std::uint64_t seed, std::int64_t iteration, int first, int count,
                                          int horizon, Eigen::Index action_dim) {
  std::vector<Eigen::VectorXd> eps(static_cast<std::size_t>(horizon), Eigen::VectorXd(count * action_dim));
  const std::uint64_t iter_seed = mix_seed(seed, static_cast<std::uint64_t>(iteration));
  for (int i = 0; i < count; ++i) {
    std::mt19937_64 rng(mix_seed(iter_seed, static_cast<std::uint64_t>(first + i)));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int t = 0; t < horizon; ++t) {
      for (Eigen::Index k = 0; k < action_dim; ++k) eps[t][i * action_dim + k] = normal(rng);
    }
  }
  return eps;
}

Trajectory Rollout::trajectory(int b, std::string env_id, std::uint64_t seed) const {
  Trajectory traj;
  traj.env = std::move(env_id);
  traj.seed = seed;
  for (const auto& s : states) {
    const ad::Index d = s.dim(1);
    traj.states.push_back(s.values().segment(b * d, d));
  }
  for (const auto& a : actions) {
    const ad::Index d = a.dim(1);
    traj.actions.push_back(a.values().segment(b * d, d));
  }
  return traj;
}

Rollout rollout(const policy::PolicyTensors& policy, const envs::Env& env, int batch, int trunc,
                const std::vector<Eigen::VectorXd>& eps) {
  if (trunc < 1 || batch < 1) throw UsageError("rollout: batch and trunc must be >= 1");
  Rollout r;
  r.batch = batch;
  r.states.push_back(start_batch(env, batch));
  ad::Tensor carried = r.states.back();
  for (std::size_t t = 0; t < eps.size(); ++t) {
    try {
      const policy::PolicyOutput out = policy::forward(policy, env.observe_batch(carried));
      ad::Tensor a = policy::sample(out, eps[t], env.action_bound());
      ad::Tensor next = env.step_batch(carried, a);
      r.actions.push_back(std::move(a));
      r.states.push_back(next);
      carried = (t + 1) % static_cast<std::size_t>(trunc) == 0 ? ad::detach(next) : next;
    } catch (const NumericError& e) {
      throw NumericError(e.op(), e.node(), "rollout step " + std::to_string(t) + ": " + e.what());
    }
  }
  return r;
}

Rollout rollout_mean(const policy::PolicyParams& params, const envs::Env& env, int batch,
                     const std::vector<envs::PerturbSpec>& perturb) {
  if (!perturb.empty() && perturb.size() != static_cast<std::size_t>(batch)) {
    throw UsageError("rollout_mean: one perturbation per episode");
  }
  std::vector<envs::ActionPerturber> noise;
  for (const auto& spec : perturb) noise.emplace_back(spec);
  const policy::PolicyTensors policy = policy::PolicyTensors::constant(params);
  const ad::Index m = env.action_dim();

  Rollout r;
  r.batch = batch;
  r.states.push_back(start_batch(env, batch));
  for (int t = 0; t < env.horizon(); ++t) {
    const ad::Tensor& s = r.states.back();
    ad::Tensor a = policy::mean_action(policy::forward(policy, env.observe_batch(s)), env.action_bound());
    ad::Vector applied = a.values();
    for (std::size_t b = 0; b < noise.size(); ++b) {
      const auto off = static_cast<ad::Index>(b) * m;
      applied.segment(off, m) = noise[b].apply(a.values().segment(off, m));
    }
    r.states.push_back(env.step_batch(s, ad::Tensor(a.shape(), std::move(applied))));
    r.actions.push_back(std::move(a));
  }
  return r;
}

ad::Tensor expert_matrix(const envs::Env& env, const Trajectory& expert) {
  return loss::stack_scaled(expert, env.state_scale());
}

BatchLoss batch_loss(const Rollout& r, const envs::Env& env, const ad::Tensor& expert_scaled, loss::Kind kind,
                     double alpha) {
  const ad::Tensor scale = ad::Tensor::vector(env.state_scale());
  const ad::Index d = env.state_dim();
  std::vector<ad::Tensor> scaled;
  scaled.reserve(r.states.size());
  for (const auto& s : r.states) scaled.push_back(ad::scale_columns(s, scale));

  BatchLoss out;
  ad::Tensor total = ad::Tensor::scalar(0.0);
  std::vector<ad::Tensor> rows(scaled.size());
  for (int b = 0; b < r.batch; ++b) {
    for (std::size_t t = 0; t < scaled.size(); ++t) rows[t] = ad::slice(scaled[t], b * d, d);
    const loss::Terms terms = loss::trajectory_loss(kind, ad::stack(rows), expert_scaled, alpha);
    total = b == 0 ? terms.total : total + terms.total;
    out.deviation += terms.deviation;
    out.coverage += terms.coverage;
  }
  const double inv = 1.0 / static_cast<double>(r.batch);
  out.total = ad::mul_scalar(total, inv);
  out.deviation *= inv;
  out.coverage *= inv;
  return out;
}

namespace {

ad::Tensor bc_objective(const policy::PolicyTensors& policy, const envs::Env& env, const Trajectory& expert) {
  const int h = expert.horizon();
  const ad::Index n = env.state_dim(), m = env.action_dim();
  ad::Vector s(h * n), a(h * m);
  for (int t = 0; t < h; ++t) {
    s.segment(t * n, n) = expert.states[t];
    a.segment(t * m, m) = expert.actions[t];
  }
  const ad::Tensor obs = env.observe_batch(ad::Tensor({h, n}, std::move(s)));
  const ad::Tensor mu = policy::mean_action(policy::forward(policy, obs), env.action_bound());
  const ad::Tensor diff = mu - ad::Tensor({h, m}, std::move(a));
  return ad::mul_scalar(ad::sum(ad::square(diff)), 1.0 / h);
}

}  // namespace

double bc_loss(const policy::PolicyParams& params, const envs::Env& env, const Trajectory& expert) {
  return bc_objective(policy::PolicyTensors::constant(params), env, expert).item();
}

BcResult bc_pretrain(policy::PolicyParams& params, const envs::Env& env, const Trajectory& expert, int steps,
                     double lr) {
  envs::check_trajectory(env, expert);
  BcResult result;
  result.loss_before = bc_loss(params, env, expert);
  Eigen::VectorXd flat = params.flatten();
  AdamState adam = AdamState::zeros(flat.size());
  for (int i = 0; i < steps; ++i) {
    ad::Tape tape;
    const policy::PolicyTensors p = policy::PolicyTensors::bind(params, tape);
    const Eigen::VectorXd grad = p.gradient(tape.backward(bc_objective(p, env, expert)));
    adam_update(flat, grad, adam, lr);
    params.assign(flat);
  }
  result.loss_after = bc_loss(params, env, expert);
  return result;
}

GradientResult batch_gradient(const policy::PolicyParams& params, const envs::Env& env,
                              const ad::Tensor& expert_scaled, const TrainConfig& config, std::int64_t iteration,
                              int threads) {
  const int batch = config.batch_size;
  const int chunks = std::clamp(threads, 1, batch);
  std::vector<GradientResult> parts(static_cast<std::size_t>(chunks));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(chunks));

  auto run_chunk = [&](int c) {
    const int first = batch * c / chunks, last = batch * (c + 1) / chunks;
    try {
      ad::Tape tape;
      const policy::PolicyTensors p = policy::PolicyTensors::bind(params, tape);
      const auto eps =
          policy_noise(config.seed, iteration, first, last - first, env.horizon(), env.action_dim());
      const Rollout r = rollout(p, env, last - first, config.trunc, eps);
      const BatchLoss l = batch_loss(r, env, expert_scaled, config.loss, config.alpha);
      GradientResult& out = parts[static_cast<std::size_t>(c)];
      out.grad = p.gradient(tape.backward(l.total));
      out.loss = l.total.item();
      out.deviation = l.deviation;
      out.coverage = l.coverage;
    } catch (...) {
      errors[static_cast<std::size_t>(c)] = std::current_exception();
    }
  };

  if (chunks == 1) {
    run_chunk(0);
  } else {
    std::vector<std::thread> workers;
    for (int c = 0; c < chunks; ++c) workers.emplace_back(run_chunk, c);
    for (auto& w : workers) w.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  if (chunks == 1) return std::move(parts[0]);

  GradientResult merged;
  merged.grad = Eigen::VectorXd::Zero(parts[0].grad.size());
  for (int c = 0; c < chunks; ++c) {
    const double w = static_cast<double>(batch * (c + 1) / chunks - batch * c / chunks) / batch;
    const GradientResult& p = parts[static_cast<std::size_t>(c)];
    merged.grad += w * p.grad;
    merged.loss += w * p.loss;
    merged.deviation += w * p.deviation;
    merged.coverage += w * p.coverage;
  }
  return merged;
}

envs::PerturbSpec PerturbSettings::episode(Eigen::Index action_dim, int e) const {
  return envs::PerturbSpec::uniform(action_dim, bias, noise_std, mix_seed(seed, static_cast<std::uint64_t>(e)));
}

EvalStats evaluate(const policy::PolicyParams& params, const envs::Env& env, int episodes,
                   std::optional<PerturbSettings> perturb) {
  if (episodes < 1) throw ConfigError("evaluate: episodes must be >= 1");
  std::vector<envs::PerturbSpec> specs;
  if (perturb) {
    for (int e = 0; e < episodes; ++e) specs.push_back(perturb->episode(env.action_dim(), e));
  }
  // Nominal episodes are identical, so one rollout stands in for all of them.
  const Rollout r = rollout_mean(params, env, perturb ? episodes : 1, specs);
  std::vector<double> scores;
  for (int e = 0; e < episodes; ++e) {
    scores.push_back(env.score(r.trajectory(perturb ? e : 0, std::string(env.id()))));
  }
  return summarize(std::move(scores));
}

EvalStats evaluate_replay(const envs::Env& env, const Trajectory& expert, int episodes,
                          std::optional<PerturbSettings> perturb) {
  if (episodes < 1) throw ConfigError("evaluate: episodes must be >= 1");
  std::vector<double> scores;
  for (int e = 0; e < episodes; ++e) {
    std::optional<envs::PerturbSpec> spec;
    if (perturb) spec = perturb->episode(env.action_dim(), e);
    scores.push_back(env.score(replay(env, expert.actions, spec)));
  }
  return summarize(std::move(scores));
}

std::string metrics_header() {
  return "seed,iteration,wall_seconds,train_loss,deviation_term,coverage_term,grad_norm_preclip,"
         "eval_score_nominal_mean,eval_score_nominal_std,eval_score_perturbed_mean,eval_score_perturbed_std";
}

std::string metrics_line(const MetricsRow& r) {
  return std::to_string(r.seed) + "," + std::to_string(r.iteration) + "," + fmt(r.wall_seconds) + "," +
         fmt(r.train_loss) + "," + fmt(r.deviation_term) + "," + fmt(r.coverage_term) + "," +
         fmt(r.grad_norm_preclip) + "," + fmt(r.nominal.mean) + "," + fmt(r.nominal.std) + "," +
         fmt(r.perturbed.mean) + "," + fmt(r.perturbed.std);
}

policy::PolicyParams init_policy(const TrainConfig& config, const envs::Env& env) {
  std::mt19937_64 rng(mix_seed(config.seed, 0x706f6c696379ULL));
  return policy::PolicyParams::init(env.state_dim(), config.hidden1, config.hidden2, env.action_dim(), rng);
}

TrainResult train(const TrainConfig& config, const Trajectory& expert, const TrainHooks& hooks, int threads) {
  config.validate();
  const auto env = envs::make_env(config.env, config.env_options());
  envs::check_trajectory(*env, expert);
  const auto start = std::chrono::steady_clock::now();

  TrainResult result;
  result.expert = expert;
  policy::PolicyParams params = init_policy(config, *env);
  result.initial = params;
  result.bc = bc_pretrain(params, *env, expert, config.bc_steps, config.learning_rate);
  result.pretrained = params;
  result.best_params = params;

  const ad::Tensor expert_scaled = expert_matrix(*env, expert);
  const PerturbSettings perturb{config.perturb_bias, config.perturb_std, mix_seed(config.seed, 0x6576616cULL)};
  Eigen::VectorXd flat = params.flatten();
  AdamState adam = AdamState::zeros(flat.size());
  double best = -std::numeric_limits<double>::infinity();
  double best_perturbed = -std::numeric_limits<double>::infinity();

  auto abort = [&](std::int64_t it, const std::string& why) {
    if (hooks.on_abort) hooks.on_abort(params, it);
    throw TrainingAborted(it, why);
  };

  for (std::int64_t it = 0; it <= config.iterations; ++it) {
    GradientResult g;
    try {
      g = batch_gradient(params, *env, expert_scaled, config, it, threads);
    } catch (const NumericError& e) {
      abort(it, e.what());
    }
    if (!std::isfinite(g.loss) || !g.grad.allFinite()) abort(it, "non-finite loss or gradient");

    if (it % config.eval_every == 0 || it == config.iterations) {
      MetricsRow row;
      row.seed = config.seed;
      row.iteration = it;
      if (config.record_wall_time) {
        row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      }
      row.train_loss = g.loss;
      row.deviation_term = g.deviation;
      row.coverage_term = g.coverage;
      row.grad_norm_preclip = g.grad.norm();
      try {
        row.nominal = evaluate(params, *env, config.eval_episodes);
        row.perturbed = evaluate(params, *env, config.eval_episodes, perturb);
      } catch (const NumericError& e) {
        abort(it, std::string("evaluation: ") + e.what());
      }
      // Nominal score first; the perturbed score breaks ties.
      if (row.nominal.mean > best || (row.nominal.mean == best && row.perturbed.mean > best_perturbed)) {
        best = row.nominal.mean;
        best_perturbed = row.perturbed.mean;
        result.best_params = params;
        result.best_iteration = it;
        if (hooks.on_best) hooks.on_best(params, it);
      }
      result.history.push_back(row);
      if (hooks.on_metrics) hooks.on_metrics(row);
    }
    if (it == config.iterations) break;

    result.grad_norm_preclip.push_back(clip_global_norm(g.grad, config.clip_norm));
    result.grad_norm_postclip.push_back(g.grad.norm());
    adam_update(flat, g.grad, adam, config.learning_rate);
    if (!flat.allFinite()) abort(it, "non-finite parameters after update");
    params.assign(flat);
  }
  result.final_params = params;
  return result;
}

TrainResult train(const TrainConfig& config, const TrainHooks& hooks, int threads) {
  config.validate();
  const auto env = envs::make_env(config.env, config.env_options());
  return train(config, generate_expert(*env, config.seed), hooks, threads);
}

}  // namespace diffil::train
