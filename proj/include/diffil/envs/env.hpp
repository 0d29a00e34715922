// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "diffil/autodiff/tensor.hpp"
#include "diffil/trajectory.hpp"

#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace diffil::envs {

/// Differentiable environment contract.
///
/// Implementations are immutable parameter bundles: step() is a pure function
/// of (state, action) recorded as tape ops, so rollouts may run concurrently.
class Env {
 public:
  virtual ~Env() = default;

  virtual std::string_view id() const = 0;
  virtual ad::Index state_dim() const = 0;
  virtual ad::Index action_dim() const = 0;
  virtual int horizon() const = 0;
  virtual double action_bound() const { return 1.0; }

  /// Fixed start state of every episode.
  virtual Eigen::VectorXd initial_state() const = 0;

  /// One environment step. Actions are clamped to +-action_bound() inside.
  virtual ad::Tensor step(const ad::Tensor& state, const ad::Tensor& action) const = 0;

  /// Row-wise step over a batch: states [B, state_dim], actions [B, action_dim].
  /// Row b of the result equals step() on row b. The default splits rows.
  virtual ad::Tensor step_batch(const ad::Tensor& states, const ad::Tensor& actions) const;

  /// Policy input for a state. Default: state scaled by observation_scale().
  virtual ad::Tensor observe(const ad::Tensor& state) const;
  /// observe() applied to every row of a [B, state_dim] batch.
  virtual ad::Tensor observe_batch(const ad::Tensor& states) const;
  virtual Eigen::VectorXd observation_scale() const;

  /// Per-dimension weights applied to states before trajectory matching.
  virtual Eigen::VectorXd state_scale() const;

  /// Evaluation-only score of a finished episode (never used for learning).
  virtual double score(const Trajectory& traj) const = 0;

  /// Whether a score counts as task success for expert generation.
  virtual bool success(const Trajectory& traj) const = 0;
};

struct EnvOptions {
  /// Cloth only: unit-norm adjoint at every step boundary.
  bool normalize_adjoint = true;
  /// Cloth only: velocity drag rate, 0 for the undamped update.
  double cloth_damping = 0.0;
};

/// Known ids: point_mass, pendulum, cloth.
std::unique_ptr<Env> make_env(std::string_view id, const EnvOptions& options = {});
const std::vector<std::string>& env_ids();

/// Throws UsageError when the trajectory does not fit the env.
void check_trajectory(const Env& env, const Trajectory& traj);

}  // namespace diffil::envs
