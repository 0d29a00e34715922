// SPDX-License-Identifier: Apache-2.0
#include "diffil/train/expert.hpp"

#include "diffil/envs/cloth.hpp"
#include "diffil/envs/pendulum.hpp"
#include "diffil/envs/point_mass.hpp"
#include "diffil/errors.hpp"

#include <cmath>
#include <functional>
#include <numbers>

namespace diffil::train {
namespace {

using Controller = std::function<Eigen::VectorXd(int t, const Eigen::VectorXd& state)>;

Trajectory run_closed_loop(const envs::Env& env, std::uint64_t seed, const Controller& control) {
  Trajectory traj;
  traj.env = std::string(env.id());
  traj.seed = seed;
  traj.states.push_back(env.initial_state());
  for (int t = 0; t < env.horizon(); ++t) {
    Eigen::VectorXd a = control(t, traj.states.back());
    traj.actions.push_back(a);
    traj.states.push_back(env.step(ad::Tensor::vector(traj.states.back()), ad::Tensor::vector(a)).values());
  }
  return traj;
}

Eigen::VectorXd point_mass_action(const envs::PointMass& env, const Eigen::VectorXd& s) {
  const int d = env.params().dim;
  const Eigen::VectorXd f = kPointMassKp * (env.params().goal - s.head(d)) - kPointMassKd * s.tail(d);
  return f.cwiseMax(-env.action_bound()).cwiseMin(env.action_bound());
}

Eigen::VectorXd pendulum_action(const envs::Pendulum& env, const Eigen::VectorXd& s) {
  const double theta = s[0], omega = s[1];
  const double energy = env.energy(theta, omega);
  double u = 0.0;
  if (energy > 0.3) {
    if (std::cos(theta) > 0.0) u = -2.0 * energy * omega;
  } else {
    u = -4.0 * envs::wrap_angle(theta) - 1.0 * omega;
  }
  return Eigen::VectorXd::Constant(1, std::clamp(u, -env.action_bound(), env.action_bound()));
}

// Phase lengths in steps and gripper displacement per phase.
struct Phase {
  int steps;
  Eigen::Vector3d displacement;
};

Eigen::VectorXd cloth_action(const envs::Cloth& env, int t) {
  const Eigen::Vector3d offset = env.params().goal_offset;
  const Phase phases[] = {{16, {0.0, 0.0, 0.5}}, {32, offset}, {16, {0.0, 0.0, -0.5}}, {16, Eigen::Vector3d::Zero()}};
  const double step_time = env.params().substeps * env.params().dt;
  Eigen::Vector3d vel = Eigen::Vector3d::Zero();
  int start = 0;
  for (const Phase& p : phases) {
    if (t < start + p.steps) {
      const double tau = (t - start + 0.5) / p.steps;
      vel = p.displacement / p.steps * (1.0 - std::cos(2.0 * std::numbers::pi * tau)) / step_time;
      break;
    }
    start += p.steps;
  }
  Eigen::VectorXd a(6);
  a << vel, vel;
  return a;
}

}  // namespace

Trajectory generate_expert(const envs::Env& env, std::uint64_t seed) {
  Trajectory traj;
  if (const auto* pm = dynamic_cast<const envs::PointMass*>(&env)) {
    traj = run_closed_loop(env, seed, [pm](int, const Eigen::VectorXd& s) { return point_mass_action(*pm, s); });
  } else if (const auto* pend = dynamic_cast<const envs::Pendulum*>(&env)) {
    traj = run_closed_loop(env, seed, [pend](int, const Eigen::VectorXd& s) { return pendulum_action(*pend, s); });
  } else if (const auto* cloth = dynamic_cast<const envs::Cloth*>(&env)) {
    traj = run_closed_loop(env, seed, [cloth](int t, const Eigen::VectorXd&) { return cloth_action(*cloth, t); });
  } else {
    throw ConfigError("no scripted expert for env '" + std::string(env.id()) + "'");
  }
  if (!env.success(traj)) {
    throw GenerationError("scripted " + std::string(env.id()) + " expert failed its success check (score " +
                          std::to_string(env.score(traj)) + ")");
  }
  return traj;
}

Trajectory replay(const envs::Env& env, const std::vector<Eigen::VectorXd>& actions,
                  std::optional<envs::PerturbSpec> perturb) {
  std::optional<envs::ActionPerturber> noise;
  if (perturb) noise.emplace(*perturb);
  Trajectory traj;
  traj.env = std::string(env.id());
  traj.states.push_back(env.initial_state());
  for (const Eigen::VectorXd& a : actions) {
    const Eigen::VectorXd applied = noise ? noise->apply(a) : a;
    traj.actions.push_back(a);
    traj.states.push_back(
        env.step(ad::Tensor::vector(traj.states.back()), ad::Tensor::vector(applied)).values());
  }
  return traj;
}

}  // namespace diffil::train
