// SPDX-License-Identifier: Apache-2.0
#include "diffil/envs/point_mass.hpp"

#include "diffil/autodiff/ops.hpp"
#include "diffil/errors.hpp"

namespace diffil::envs {

ad::Tensor point_mass_step(const ad::Tensor& state, const ad::Tensor& force,
                           const PointMassParams& params, double action_bound) {
  const ad::Index d = params.dim;
  if (state.size() != 2 * d || force.size() != d) {
    throw ConfigError("point_mass_step: expected state of size " + std::to_string(2 * d) +
                      " and force of size " + std::to_string(d));
  }
  if (!state.values().allFinite()) throw NumericError("point_mass_step", state.node(), "state");
  const ad::Tensor x = ad::slice(state, 0, d);
  const ad::Tensor v = ad::slice(state, d, d);
  const ad::Tensor f = ad::clamp(ad::reshape(force, {d}), -action_bound, action_bound);
  const ad::Tensor parts[] = {x + v * params.dt, v + f * (params.dt / params.mass)};
  return ad::concat(parts);
}

ad::Tensor point_mass_step_batch(const ad::Tensor& states, const ad::Tensor& forces,
                                 const PointMassParams& params, double action_bound) {
  const ad::Index d = params.dim;
  if (states.rank() != 2 || forces.rank() != 2 || states.dim(1) != 2 * d || forces.dim(1) != d ||
      states.dim(0) != forces.dim(0)) {
    throw ConfigError("point_mass_step: batch shape mismatch");
  }
  if (!states.values().allFinite()) throw NumericError("point_mass_step", states.node(), "state");
  const ad::Index batch = states.dim(0);
  const double dt = params.dt, inv_m = params.dt / params.mass;
  Eigen::Map<const ad::RowMajorMatrix> s(states.values().data(), batch, 2 * d);
  Eigen::Map<const ad::RowMajorMatrix> f(forces.values().data(), batch, d);
  ad::RowMajorMatrix mask = (f.array() >= -action_bound && f.array() <= action_bound).cast<double>();
  ad::Vector out(states.size());
  Eigen::Map<ad::RowMajorMatrix> o(out.data(), batch, 2 * d);
  o.leftCols(d) = s.leftCols(d) + s.rightCols(d) * dt;
  o.rightCols(d) = s.rightCols(d) + f.cwiseMax(-action_bound).cwiseMin(action_bound) * inv_m;
  ad::Tensor result(states.shape(), std::move(out));
  if (!result.values().allFinite()) throw NumericError("point_mass_step", states.node(), "output");
  if (!states.tracked() && !forces.tracked()) return result;
  const ad::Tensor* inputs[] = {&states, &forces};
  return ad::custom("point_mass_step", inputs, std::move(result),
                    [mask = std::move(mask), batch, d, dt, inv_m](const ad::Vector& g, ad::GradSlots slots) {
                      Eigen::Map<const ad::RowMajorMatrix> gm(g.data(), batch, 2 * d);
                      if (slots[0]) {
                        Eigen::Map<ad::RowMajorMatrix> gs(slots[0]->data(), batch, 2 * d);
                        gs.leftCols(d) += gm.leftCols(d);
                        gs.rightCols(d) += gm.leftCols(d) * dt + gm.rightCols(d);
                      }
                      if (slots[1]) {
                        Eigen::Map<ad::RowMajorMatrix> gf(slots[1]->data(), batch, d);
                        gf += (gm.rightCols(d) * inv_m).cwiseProduct(mask);
                      }
                    });
}

PointMass::PointMass(PointMassParams params) : params_(std::move(params)) {
  if (params_.dim < 1 || params_.horizon < 1 || !(params_.mass > 0) || !(params_.dt > 0)) {
    throw ConfigError("point_mass: dim, horizon, mass and dt must be positive");
  }
  if (params_.start.size() != params_.dim || params_.goal.size() != params_.dim) {
    throw ConfigError("point_mass: start/goal dimension mismatch");
  }
}

Eigen::VectorXd PointMass::initial_state() const {
  Eigen::VectorXd s = Eigen::VectorXd::Zero(2 * params_.dim);
  s.head(params_.dim) = params_.start;
  return s;
}

ad::Tensor PointMass::step(const ad::Tensor& state, const ad::Tensor& action) const {
  return point_mass_step(state, action, params_, action_bound());
}

ad::Tensor PointMass::step_batch(const ad::Tensor& states, const ad::Tensor& actions) const {
  return point_mass_step_batch(states, actions, params_, action_bound());
}

double PointMass::final_distance(const Trajectory& traj) const {
  check_trajectory(*this, traj);
  return (traj.states.back().head(params_.dim) - params_.goal).norm();
}

double PointMass::score(const Trajectory& traj) const { return -final_distance(traj); }

bool PointMass::success(const Trajectory& traj) const { return final_distance(traj) < 0.01; }

}  // namespace diffil::envs
