// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "diffil/envs/env.hpp"

#include <numbers>

namespace diffil::envs {

/// Torque-driven pendulum. theta = 0 is the hanging rest position. Episodes
/// start just off the inverted position, and the task is to bring the pole to
/// rest at the bottom and hold it there.
struct PendulumParams {
  double gravity = 9.8;
  double length = 1.0;
  double mass = 0.25;
  double dt = 0.05;
  int horizon = 128;
  double theta0 = std::numbers::pi - 0.05;
  double omega0 = 0.0;
  /// Success: mean |theta| over the last 10 states below this.
  double success_tolerance = 0.05;
};

/// Semi-implicit Euler, state [theta, omega]:
///   omega' = omega + dt * (-(g/l) sin(theta) + a / (m l^2)),  theta' = theta + dt * omega'
ad::Tensor pendulum_step(const ad::Tensor& state, const ad::Tensor& torque,
                         const PendulumParams& params, double action_bound = 1.0);

/// pendulum_step over the rows of [B, 2] states and [B, 1] torques, fused.
ad::Tensor pendulum_step_batch(const ad::Tensor& states, const ad::Tensor& torques,
                               const PendulumParams& params, double action_bound = 1.0);

/// Wraps to (-pi, pi]. The derivative is taken as 1 everywhere.
ad::Tensor wrap_angle(const ad::Tensor& theta);
double wrap_angle(double theta);

class Pendulum final : public Env {
 public:
  explicit Pendulum(PendulumParams params = {});

  std::string_view id() const override { return "pendulum"; }
  ad::Index state_dim() const override { return 2; }
  ad::Index action_dim() const override { return 1; }
  int horizon() const override { return params_.horizon; }

  Eigen::VectorXd initial_state() const override;
  ad::Tensor step(const ad::Tensor& state, const ad::Tensor& action) const override;
  ad::Tensor step_batch(const ad::Tensor& states, const ad::Tensor& actions) const override;
  ad::Tensor observe(const ad::Tensor& state) const override;
  ad::Tensor observe_batch(const ad::Tensor& states) const override;
  Eigen::VectorXd observation_scale() const override;
  Eigen::VectorXd state_scale() const override;
  double score(const Trajectory& traj) const override;
  bool success(const Trajectory& traj) const override;

  /// Kinetic plus potential energy, zero at the hanging rest position.
  double energy(double theta, double omega) const;
  const PendulumParams& params() const { return params_; }

 private:
  PendulumParams params_;
};

}  // namespace diffil::envs
