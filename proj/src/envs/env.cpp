// SPDX-License-Identifier: Apache-2.0
#include "diffil/envs/env.hpp"

#include "diffil/autodiff/ops.hpp"
#include "diffil/envs/cloth.hpp"
#include "diffil/envs/pendulum.hpp"
#include "diffil/envs/point_mass.hpp"
#include "diffil/errors.hpp"

namespace diffil::envs {

ad::Tensor Env::observe(const ad::Tensor& state) const {
  return ad::mul(state, ad::Tensor::vector(observation_scale()));
}

ad::Tensor Env::observe_batch(const ad::Tensor& states) const {
  return ad::scale_columns(states, ad::Tensor::vector(observation_scale()));
}

ad::Tensor Env::step_batch(const ad::Tensor& states, const ad::Tensor& actions) const {
  const ad::Index n = state_dim(), m = action_dim();
  if (states.rank() != 2 || actions.rank() != 2 || states.dim(1) != n || actions.dim(1) != m ||
      states.dim(0) != actions.dim(0)) {
    throw ConfigError(std::string(id()) + ": step_batch shape mismatch");
  }
  std::vector<ad::Tensor> rows;
  rows.reserve(static_cast<std::size_t>(states.dim(0)));
  for (ad::Index b = 0; b < states.dim(0); ++b) {
    rows.push_back(step(ad::slice(states, b * n, n), ad::slice(actions, b * m, m)));
  }
  return ad::stack(rows);
}

Eigen::VectorXd Env::observation_scale() const { return Eigen::VectorXd::Ones(state_dim()); }

Eigen::VectorXd Env::state_scale() const { return Eigen::VectorXd::Ones(state_dim()); }

const std::vector<std::string>& env_ids() {
  static const std::vector<std::string> ids = {"point_mass", "pendulum", "cloth"};
  return ids;
}

std::unique_ptr<Env> make_env(std::string_view id, const EnvOptions& options) {
  if (id == "point_mass") return std::make_unique<PointMass>();
  if (id == "pendulum") return std::make_unique<Pendulum>();
  if (id == "cloth") {
    ClothParams p;
    p.normalize_adjoint = options.normalize_adjoint;
    p.damping = options.cloth_damping;
    return std::make_unique<Cloth>(p);
  }
  throw ConfigError("unknown env '" + std::string(id) + "' (expected point_mass, pendulum or cloth)");
}

void check_trajectory(const Env& env, const Trajectory& traj) {
  traj.validate();
  if (traj.horizon() != env.horizon()) {
    throw UsageError("trajectory length " + std::to_string(traj.horizon()) + " does not match " +
                     std::string(env.id()) + " horizon " + std::to_string(env.horizon()));
  }
  if (traj.states.front().size() != env.state_dim()) {
    throw UsageError("trajectory state dimension does not match env " + std::string(env.id()));
  }
  if (!traj.actions.empty() && traj.actions.front().size() != env.action_dim()) {
    throw UsageError("trajectory action dimension does not match env " + std::string(env.id()));
  }
}

}  // namespace diffil::envs
