// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "diffil/autodiff/ops.hpp"
#include "diffil/trajectory.hpp"

#include <span>
#include <string_view>

namespace diffil::loss {

// Trajectories enter as [T, d] state matrices, one row per time step.
// The expert side is always treated as a constant.

/// Mean over learner rows of the squared distance to the nearest expert row.
ad::Tensor deviation_loss(const ad::Tensor& learner, const ad::Tensor& expert);
/// Mean over expert rows of the squared distance to the nearest learner row.
ad::Tensor coverage_loss(const ad::Tensor& learner, const ad::Tensor& expert);
/// coverage + alpha * deviation. Throws ConfigError for alpha < 0.
ad::Tensor chamfer_alpha(const ad::Tensor& learner, const ad::Tensor& expert, double alpha);
/// Time-aligned mean of squared distances. Throws UsageError on length mismatch.
ad::Tensor l2_loss(const ad::Tensor& learner, const ad::Tensor& expert);

enum class Kind { kChamfer, kL2 };
Kind parse_kind(std::string_view name);
std::string_view kind_name(Kind kind);

/// Both Chamfer terms from one distance matrix, plus the selected objective.
struct Terms {
  ad::Tensor total;
  double deviation = 0.0;
  double coverage = 0.0;
};
Terms trajectory_loss(Kind kind, const ad::Tensor& learner, const ad::Tensor& expert, double alpha);

/// Stack states into [T, d] after an elementwise per-dimension scale.
ad::Tensor stack_scaled(std::span<const ad::Tensor> states, const Eigen::VectorXd& scale);
ad::Tensor stack_scaled(const Trajectory& traj, const Eigen::VectorXd& scale);

}  // namespace diffil::loss
