// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "diffil/envs/env.hpp"
#include "diffil/envs/perturb.hpp"
#include "diffil/loss/losses.hpp"
#include "diffil/policy/mlp_policy.hpp"
#include "diffil/train/config.hpp"
#include "diffil/trajectory.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace diffil::train {

/// splitmix64-based mixing used for every derived seed.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

/// Standard normal policy noise for rollouts [first, first + count) of one
/// iteration. Entry t holds the step-t draws, row-major [count, action_dim].
/// Rollout b's draws depend only on (seed, iteration, b).
std::vector<Eigen::VectorXd> policy_noise(std::uint64_t seed, std::int64_t iteration, int first, int count,
                                          int horizon, Eigen::Index action_dim);

/// A batch of rollouts recorded on whatever tape the policy lives on.
struct Rollout {
  /// H + 1 tensors of shape [B, state_dim]. states[0] is the constant start.
  std::vector<ad::Tensor> states;
  /// H tensors of shape [B, action_dim].
  std::vector<ad::Tensor> actions;
  int batch = 0;

  /// Values of rollout b as a plain trajectory.
  Trajectory trajectory(int b, std::string env_id, std::uint64_t seed = 0) const;
};

/// Sampled-action rollout of `eps.size()` steps. After every `trunc` steps
/// the carried state is detached; the returned states keep their tracked
/// versions so the loss still sees every step.
Rollout rollout(const policy::PolicyTensors& policy, const envs::Env& env, int batch, int trunc,
                const std::vector<Eigen::VectorXd>& eps);

/// Deterministic mean-action rollout, optionally with per-episode action
/// corruption (one spec per batch row).
Rollout rollout_mean(const policy::PolicyParams& params, const envs::Env& env, int batch,
                     const std::vector<envs::PerturbSpec>& perturb = {});

struct BatchLoss {
  ad::Tensor total;  // mean over rollouts
  double deviation = 0.0;
  double coverage = 0.0;
};

/// Each rollout is matched against the expert separately (states scaled by
/// env.state_scale()), then averaged.
BatchLoss batch_loss(const Rollout& r, const envs::Env& env, const ad::Tensor& expert_scaled, loss::Kind kind,
                     double alpha);

/// Expert states stacked and scaled for matching.
ad::Tensor expert_matrix(const envs::Env& env, const Trajectory& expert);

/// Mean over expert pairs of ||mean_action(s_t) - a*_t||^2.
double bc_loss(const policy::PolicyParams& params, const envs::Env& env, const Trajectory& expert);

struct BcResult {
  double loss_before = 0.0;
  double loss_after = 0.0;
};
/// `steps` Adam steps on bc_loss at learning rate `lr`.
BcResult bc_pretrain(policy::PolicyParams& params, const envs::Env& env, const Trajectory& expert, int steps,
                     double lr);

struct GradientResult {
  Eigen::VectorXd grad;  // flat, PolicyParams::flatten() order
  double loss = 0.0;
  double deviation = 0.0;
  double coverage = 0.0;
};

/// Mean loss and parameter gradient over config.batch_size rollouts of one
/// iteration. threads <= 1 is the sequential reference; otherwise the batch
/// is split into contiguous chunks, each on a private tape, merged in order.
GradientResult batch_gradient(const policy::PolicyParams& params, const envs::Env& env,
                              const ad::Tensor& expert_scaled, const TrainConfig& config, std::int64_t iteration,
                              int threads = 0);

struct EvalStats {
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> scores;
};

struct PerturbSettings {
  double bias = 0.1;
  double noise_std = 0.05;
  std::uint64_t seed = 0;

  /// Episode e draws from its own seeded stream.
  envs::PerturbSpec episode(Eigen::Index action_dim, int e) const;
};

/// eval_score over `episodes` mean-action episodes.
EvalStats evaluate(const policy::PolicyParams& params, const envs::Env& env, int episodes,
                   std::optional<PerturbSettings> perturb = std::nullopt);
/// Open-loop replay of the expert's actions.
EvalStats evaluate_replay(const envs::Env& env, const Trajectory& expert, int episodes,
                          std::optional<PerturbSettings> perturb = std::nullopt);

struct MetricsRow {
  std::uint64_t seed = 0;
  std::int64_t iteration = 0;
  double wall_seconds = 0.0;
  double train_loss = 0.0;
  double deviation_term = 0.0;
  double coverage_term = 0.0;
  double grad_norm_preclip = 0.0;
  EvalStats nominal;
  EvalStats perturbed;
};

std::string metrics_header();
std::string metrics_line(const MetricsRow& row);

struct TrainHooks {
  std::function<void(const MetricsRow&)> on_metrics;
  /// New best eval: higher nominal score, or equal nominal and higher perturbed.
  std::function<void(const policy::PolicyParams&, std::int64_t iteration)> on_best;
  /// Last finite parameters before a numeric abort.
  std::function<void(const policy::PolicyParams&, std::int64_t iteration)> on_abort;
};

struct TrainResult {
  Trajectory expert;
  policy::PolicyParams initial;  // before BC
  policy::PolicyParams pretrained;  // after BC
  policy::PolicyParams final_params;
  policy::PolicyParams best_params;
  std::int64_t best_iteration = 0;
  BcResult bc;
  std::vector<MetricsRow> history;
  /// Per update: global gradient norm before and after clipping.
  std::vector<double> grad_norm_preclip;
  std::vector<double> grad_norm_postclip;
};

/// Algorithm loop: BC pretrain, then one clipped Adam step per iteration on
/// the batch loss, evaluating every eval_every iterations and after the last.
/// Throws TrainingAborted on a non-finite loss or gradient.
TrainResult train(const TrainConfig& config, const Trajectory& expert, const TrainHooks& hooks = {},
                  int threads = 0);
/// Generates the scripted expert for config.env first.
TrainResult train(const TrainConfig& config, const TrainHooks& hooks = {}, int threads = 0);

/// Policy widths for an env under a config.
policy::PolicyParams init_policy(const TrainConfig& config, const envs::Env& env);

}  // namespace diffil::train
