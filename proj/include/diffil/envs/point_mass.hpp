// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "diffil/envs/env.hpp"

namespace diffil::envs {

struct PointMassParams {
  int dim = 2;
  double mass = 1.0;
  double dt = 0.1;
  int horizon = 128;
  Eigen::VectorXd start = Eigen::VectorXd::Zero(2);
  Eigen::VectorXd goal = (Eigen::VectorXd(2) << 1.0, 0.5).finished();
};

/// Explicit-Euler point mass, state [x, v]:
///   x' = x + dt * v,   v' = v + dt * f / m
/// The position update uses the incoming velocity.
ad::Tensor point_mass_step(const ad::Tensor& state, const ad::Tensor& force,
                           const PointMassParams& params, double action_bound = 1.0);

/// point_mass_step over the rows of [B, 2*dim] states and [B, dim] forces,
/// fused into one tape node.
ad::Tensor point_mass_step_batch(const ad::Tensor& states, const ad::Tensor& forces,
                                 const PointMassParams& params, double action_bound = 1.0);

class PointMass final : public Env {
 public:
  explicit PointMass(PointMassParams params = {});

  std::string_view id() const override { return "point_mass"; }
  ad::Index state_dim() const override { return 2 * params_.dim; }
  ad::Index action_dim() const override { return params_.dim; }
  int horizon() const override { return params_.horizon; }

  Eigen::VectorXd initial_state() const override;
  ad::Tensor step(const ad::Tensor& state, const ad::Tensor& action) const override;
  ad::Tensor step_batch(const ad::Tensor& states, const ad::Tensor& actions) const override;
  double score(const Trajectory& traj) const override;
  bool success(const Trajectory& traj) const override;

  /// Euclidean distance from the final position to the goal.
  double final_distance(const Trajectory& traj) const;
  const PointMassParams& params() const { return params_; }

 private:
  PointMassParams params_;
};

}  // namespace diffil::envs
