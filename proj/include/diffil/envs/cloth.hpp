// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "diffil/envs/env.hpp"

#include <Eigen/Core>

#include <utility>
#include <vector>

namespace diffil::envs {

struct ClothParams {
  int rows = 8;
  int cols = 8;
  /// Side length of the square cloth at rest.
  double edge = 1.0;
  double spring_k = 1e4;
  double mass = 1.0;
  double dt = 2e-3;
  int substeps = 50;
  double gravity = 9.8;
  int horizon = 80;
  /// Velocity drag rate in 1/s: v' = exp(-dt * damping) v + dt f / m. 0 keeps
  /// the plain update.
  double damping = 0.0;
  /// false: raw displacement force -k(|r| - l) r. true: unit direction -k(|r| - l) r/|r|.
  bool unit_direction = false;
  /// Pin the two top corners to the grippers.
  bool pinned = true;
  /// Rescale the state adjoint to unit norm at every env-step boundary.
  bool normalize_adjoint = true;
  /// Gripper displacement that places the cloth over the target.
  Eigen::Vector3d goal_offset{0.0, 1.0, 0.0};
  /// Success when mean keypoint distance < success_fraction * edge.
  double success_fraction = 0.1;
  /// Damped relaxation used only to build the hanging start state.
  int settle_substeps = 5000;
  double settle_damping = 20.0;
};

/// Spring topology of an rows x cols grid: structural (4-connected) plus shear
/// (diagonal) springs, rest lengths taken from the flat grid.
struct ClothMesh {
  int rows = 0;
  int cols = 0;
  std::vector<std::pair<int, int>> springs;
  Eigen::VectorXd rest_length;
  /// Flat grid in the x-z plane, row 0 on top at z = 0.
  Eigen::Matrix3Xd flat_positions;
  std::vector<int> pins;
  std::vector<bool> is_pinned;

  static ClothMesh grid(const ClothParams& params);
  int nodes() const { return rows * cols; }
};

/// Positions/velocities of every node, one column per node.
struct ClothNodes {
  Eigen::Matrix3Xd x;
  Eigen::Matrix3Xd v;
};

/// Per-node spring force sum_j -k(|x_i - x_j| - l_ij)(x_i - x_j) plus gravity
/// on the vertical axis.
Eigen::Matrix3Xd cloth_forces(const ClothMesh& mesh, const ClothParams& params,
                              const Eigen::Matrix3Xd& x);

/// One semi-implicit substep: v' = exp(-dt damping) v + dt f/m, x' = x + dt v'. Pinned nodes
/// skip the force update and move with their gripper velocity (one column per
/// pin in `pin_velocity`).
void cloth_substep(const ClothMesh& mesh, const ClothParams& params, ClothNodes& nodes,
                   const Eigen::Matrix3Xd& pin_velocity);

/// Reverse-mode adjoint of cloth_substep taken at pre-substep positions `x`.
/// On entry `x_adj`/`v_adj` hold dL/d(outputs); on exit they hold dL/d(inputs)
/// and `pin_velocity_adj` has the pin contributions added.
void cloth_substep_adjoint(const ClothMesh& mesh, const ClothParams& params,
                           const Eigen::Matrix3Xd& x, Eigen::Matrix3Xd& x_adj,
                           Eigen::Matrix3Xd& v_adj, Eigen::Matrix3Xd& pin_velocity_adj);

/// Mass-spring cloth held by two grippers at its top corners.
///
/// State layout: for each node [x(3), v(3)], then both gripper positions (6).
/// Action: two 3-D gripper velocities.
class Cloth final : public Env {
 public:
  explicit Cloth(ClothParams params = {});

  std::string_view id() const override { return "cloth"; }
  ad::Index state_dim() const override { return 6 * mesh_.nodes() + 6; }
  ad::Index action_dim() const override { return 6; }
  int horizon() const override { return params_.horizon; }

  /// The cloth hanging at rest from the grippers.
  Eigen::VectorXd initial_state() const override { return initial_state_; }
  /// `substeps` cloth_substeps as one fused tape node; followed by an adjoint
  /// normalization node when enabled.
  ad::Tensor step(const ad::Tensor& state, const ad::Tensor& action) const override;
  /// Velocities x0.1 for matching.
  Eigen::VectorXd state_scale() const override;
  double score(const Trajectory& traj) const override;
  bool success(const Trajectory& traj) const override;

  /// Start configuration translated by the goal offset.
  const Eigen::Matrix3Xd& target_positions() const { return target_; }
  double mean_keypoint_distance(const Eigen::VectorXd& state) const;

  ClothNodes unpack(const Eigen::VectorXd& state) const;
  Eigen::VectorXd pack(const ClothNodes& nodes, const Eigen::Matrix<double, 3, 2>& grippers) const;
  Eigen::Matrix<double, 3, 2> grippers(const Eigen::VectorXd& state) const;

  const ClothMesh& mesh() const { return mesh_; }
  const ClothParams& params() const { return params_; }

 private:
  ClothParams params_;
  ClothMesh mesh_;
  Eigen::VectorXd initial_state_;
  Eigen::Matrix3Xd target_;
};

}  // namespace diffil::envs
