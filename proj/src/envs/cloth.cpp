// SPDX-License-Identifier: Apache-2.0
#include "diffil/envs/cloth.hpp"

#include "diffil/autodiff/ops.hpp"
#include "diffil/errors.hpp"

#include <algorithm>
#include <cmath>

namespace diffil::envs {

ClothMesh ClothMesh::grid(const ClothParams& params) {
  if (params.rows < 2 || params.cols < 2) throw ConfigError("cloth: grid needs at least 2x2 nodes");
  ClothMesh mesh;
  mesh.rows = params.rows;
  mesh.cols = params.cols;
  const double dx = params.edge / (params.cols - 1);
  const double dz = params.edge / (params.rows - 1);
  mesh.flat_positions.resize(3, mesh.nodes());
  for (int r = 0; r < mesh.rows; ++r) {
    for (int c = 0; c < mesh.cols; ++c) {
      mesh.flat_positions.col(r * mesh.cols + c) << c * dx, 0.0, -r * dz;
    }
  }

  // Structural right/down, shear down-right/down-left.
  constexpr int offsets[4][2] = {{0, 1}, {1, 0}, {1, 1}, {1, -1}};
  for (int r = 0; r < mesh.rows; ++r) {
    for (int c = 0; c < mesh.cols; ++c) {
      for (const auto& o : offsets) {
        const int rr = r + o[0], cc = c + o[1];
        if (rr < mesh.rows && cc >= 0 && cc < mesh.cols) {
          mesh.springs.emplace_back(r * mesh.cols + c, rr * mesh.cols + cc);
        }
      }
    }
  }
  mesh.rest_length.resize(static_cast<Eigen::Index>(mesh.springs.size()));
  for (std::size_t e = 0; e < mesh.springs.size(); ++e) {
    const auto [i, j] = mesh.springs[e];
    mesh.rest_length[static_cast<Eigen::Index>(e)] =
        (mesh.flat_positions.col(i) - mesh.flat_positions.col(j)).norm();
  }

  mesh.is_pinned.assign(static_cast<std::size_t>(mesh.nodes()), false);
  if (params.pinned) {
    mesh.pins = {0, mesh.cols - 1};
    for (int p : mesh.pins) mesh.is_pinned[static_cast<std::size_t>(p)] = true;
  }
  return mesh;
}

Eigen::Matrix3Xd cloth_forces(const ClothMesh& mesh, const ClothParams& params,
                              const Eigen::Matrix3Xd& x) {
  Eigen::Matrix3Xd f = Eigen::Matrix3Xd::Zero(3, x.cols());
  for (std::size_t e = 0; e < mesh.springs.size(); ++e) {
    const auto [i, j] = mesh.springs[e];
    const Eigen::Vector3d r = x.col(i) - x.col(j);
    const double len = r.norm();
    double coeff = -params.spring_k * (len - mesh.rest_length[static_cast<Eigen::Index>(e)]);
    if (params.unit_direction) coeff /= len;
    f.col(i) += coeff * r;
    f.col(j) -= coeff * r;
  }
  f.row(2).array() -= params.mass * params.gravity;
  return f;
}

void cloth_substep(const ClothMesh& mesh, const ClothParams& params, ClothNodes& nodes,
                   const Eigen::Matrix3Xd& pin_velocity) {
  const Eigen::Matrix3Xd f = cloth_forces(mesh, params, nodes.x);
  const double h = params.dt / params.mass;
  if (params.damping != 0.0) nodes.v *= std::exp(-params.dt * params.damping);
  nodes.v += h * f;
  for (std::size_t p = 0; p < mesh.pins.size(); ++p) {
    nodes.v.col(mesh.pins[p]) = pin_velocity.col(static_cast<Eigen::Index>(p));
  }
  nodes.x += params.dt * nodes.v;
}

void cloth_substep_adjoint(const ClothMesh& mesh, const ClothParams& params,
                           const Eigen::Matrix3Xd& x, Eigen::Matrix3Xd& x_adj,
                           Eigen::Matrix3Xd& v_adj, Eigen::Matrix3Xd& pin_velocity_adj) {
  // x' = x + dt v' makes dL/dv' = v_adj + dt x_adj.
  v_adj += params.dt * x_adj;
  Eigen::Matrix3Xd f_adj = (params.dt / params.mass) * v_adj;
  for (std::size_t p = 0; p < mesh.pins.size(); ++p) {
    const int node = mesh.pins[p];
    pin_velocity_adj.col(static_cast<Eigen::Index>(p)) += v_adj.col(node);
    v_adj.col(node).setZero();
    f_adj.col(node).setZero();
  }
  if (params.damping != 0.0) v_adj *= std::exp(-params.dt * params.damping);

  // Each spring contributes phi(r) to node i and -phi(r) to node j, so
  // dL/dr = J(r)^T (f_adj_i - f_adj_j) with J symmetric.
  const double k = params.spring_k;
  for (std::size_t e = 0; e < mesh.springs.size(); ++e) {
    const auto [i, j] = mesh.springs[e];
    const Eigen::Vector3d q = f_adj.col(i) - f_adj.col(j);
    if (q.isZero(0.0)) continue;
    const Eigen::Vector3d r = x.col(i) - x.col(j);
    const double len = r.norm();
    const double rest = mesh.rest_length[static_cast<Eigen::Index>(e)];
    const double rq = r.dot(q);
    Eigen::Vector3d r_adj;
    if (params.unit_direction) {
      r_adj = -k * (q - rest * (q / len - r * (rq / (len * len * len))));
    } else {
      r_adj = -k * ((len - rest) * q + r * (rq / len));
    }
    x_adj.col(i) += r_adj;
    x_adj.col(j) -= r_adj;
  }
}

Cloth::Cloth(ClothParams params) : params_(params), mesh_(ClothMesh::grid(params_)) {
  if (!(params_.spring_k > 0) || !(params_.mass > 0) || !(params_.dt > 0) || !(params_.gravity >= 0) ||
      !(params_.damping >= 0) ||
      params_.substeps < 1 || params_.horizon < 1 || !(params_.edge > 0)) {
    throw ConfigError("cloth: physics constants must be positive");
  }

  ClothNodes nodes{mesh_.flat_positions, Eigen::Matrix3Xd::Zero(3, mesh_.nodes())};
  if (params_.pinned) {
    const Eigen::Matrix3Xd still = Eigen::Matrix3Xd::Zero(3, static_cast<Eigen::Index>(mesh_.pins.size()));
    const double decay = std::exp(-params_.settle_damping * params_.dt);
    for (int i = 0; i < params_.settle_substeps; ++i) {
      cloth_substep(mesh_, params_, nodes, still);
      nodes.v *= decay;
    }
    nodes.v.setZero();
  }
  Eigen::Matrix<double, 3, 2> grip;
  grip.col(0) = nodes.x.col(0);
  grip.col(1) = nodes.x.col(mesh_.cols - 1);
  initial_state_ = pack(nodes, grip);
  target_ = nodes.x.colwise() + params_.goal_offset;
}

ClothNodes Cloth::unpack(const Eigen::VectorXd& state) const {
  const int n = mesh_.nodes();
  ClothNodes nodes{Eigen::Matrix3Xd(3, n), Eigen::Matrix3Xd(3, n)};
  for (int i = 0; i < n; ++i) {
    nodes.x.col(i) = state.segment<3>(6 * i);
    nodes.v.col(i) = state.segment<3>(6 * i + 3);
  }
  return nodes;
}

Eigen::VectorXd Cloth::pack(const ClothNodes& nodes, const Eigen::Matrix<double, 3, 2>& grippers) const {
  const int n = mesh_.nodes();
  Eigen::VectorXd s(6 * n + 6);
  for (int i = 0; i < n; ++i) {
    s.segment<3>(6 * i) = nodes.x.col(i);
    s.segment<3>(6 * i + 3) = nodes.v.col(i);
  }
  s.segment<3>(6 * n) = grippers.col(0);
  s.segment<3>(6 * n + 3) = grippers.col(1);
  return s;
}

Eigen::Matrix<double, 3, 2> Cloth::grippers(const Eigen::VectorXd& state) const {
  const int n = mesh_.nodes();
  Eigen::Matrix<double, 3, 2> g;
  g.col(0) = state.segment<3>(6 * n);
  g.col(1) = state.segment<3>(6 * n + 3);
  return g;
}

ad::Tensor Cloth::step(const ad::Tensor& state, const ad::Tensor& action) const {
  if (state.size() != state_dim() || action.size() != action_dim()) {
    throw ConfigError("cloth_step: expected state of size " + std::to_string(state_dim()) +
                      " and action of size 6");
  }
  const double bound = action_bound();
  Eigen::Matrix<double, 3, 2> u;
  Eigen::Matrix<double, 3, 2> mask;
  for (int k = 0; k < 6; ++k) {
    const double a = action.values()[k];
    u(k % 3, k / 3) = std::clamp(a, -bound, bound);
    mask(k % 3, k / 3) = (a >= -bound && a <= bound) ? 1.0 : 0.0;
  }
  // Without pins the grippers still move but drag nothing.
  Eigen::Matrix3Xd pin_velocity(3, static_cast<Eigen::Index>(mesh_.pins.size()));
  for (Eigen::Index p = 0; p < pin_velocity.cols(); ++p) pin_velocity.col(p) = u.col(p);

  ClothNodes nodes = unpack(state.values());
  if (!nodes.x.allFinite() || !nodes.v.allFinite()) {
    throw NumericError("cloth_substep", state.node(), "non-finite input state");
  }
  std::vector<Eigen::Matrix3Xd> saved;
  const bool tracked = state.tracked() || action.tracked();
  if (tracked) saved.reserve(static_cast<std::size_t>(params_.substeps));
  for (int sub = 0; sub < params_.substeps; ++sub) {
    if (tracked) saved.push_back(nodes.x);
    cloth_substep(mesh_, params_, nodes, pin_velocity);
    if (!nodes.x.allFinite() || !nodes.v.allFinite()) {
      throw NumericError("cloth_substep", state.node(), "substep " + std::to_string(sub));
    }
  }
  const Eigen::Matrix<double, 3, 2> grip = grippers(state.values()) + (params_.substeps * params_.dt) * u;

  ad::Tensor out = ad::Tensor::vector(pack(nodes, grip));
  if (!tracked) return out;

  const ad::Tensor* inputs[] = {&state, &action};
  out = ad::custom(
      "cloth_step", inputs, std::move(out),
      [this, saved = std::move(saved), mask](const ad::Vector& g, ad::GradSlots s) {
        ClothNodes adj = unpack(g);
        const Eigen::Matrix<double, 3, 2> grip_adj = grippers(g);
        Eigen::Matrix3Xd pin_adj = Eigen::Matrix3Xd::Zero(3, static_cast<Eigen::Index>(mesh_.pins.size()));
        for (auto it = saved.rbegin(); it != saved.rend(); ++it) {
          cloth_substep_adjoint(mesh_, params_, *it, adj.x, adj.v, pin_adj);
        }
        if (s[0]) *s[0] += pack(adj, grip_adj);
        if (s[1]) {
          Eigen::Matrix<double, 3, 2> u_adj = (params_.substeps * params_.dt) * grip_adj;
          for (Eigen::Index p = 0; p < pin_adj.cols(); ++p) u_adj.col(p) += pin_adj.col(p);
          u_adj = u_adj.cwiseProduct(mask);
          for (int k = 0; k < 6; ++k) (*s[1])[k] += u_adj(k % 3, k / 3);
        }
      });
  return params_.normalize_adjoint ? ad::normalize_grad(out) : out;
}

Eigen::VectorXd Cloth::state_scale() const {
  Eigen::VectorXd scale = Eigen::VectorXd::Ones(state_dim());
  for (int i = 0; i < mesh_.nodes(); ++i) scale.segment<3>(6 * i + 3).setConstant(0.1);
  return scale;
}

double Cloth::mean_keypoint_distance(const Eigen::VectorXd& state) const {
  const ClothNodes nodes = unpack(state);
  return (nodes.x - target_).colwise().norm().mean();
}

double Cloth::score(const Trajectory& traj) const {
  check_trajectory(*this, traj);
  return mean_keypoint_distance(traj.states.back()) < params_.success_fraction * params_.edge ? 1.0 : 0.0;
}

bool Cloth::success(const Trajectory& traj) const { return score(traj) == 1.0; }

}  // namespace diffil::envs
