// SPDX-License-Identifier: Apache-2.0
#include "diffil/envs/pendulum.hpp"

#include "diffil/autodiff/ops.hpp"
#include "diffil/errors.hpp"

#include <algorithm>
#include <cmath>

namespace diffil::envs {

double wrap_angle(double theta) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(theta + std::numbers::pi, two_pi);
  if (w <= 0.0) w += two_pi;
  return w - std::numbers::pi;
}

ad::Tensor wrap_angle(const ad::Tensor& theta) {
  ad::Tensor out(theta.shape(), theta.values().unaryExpr([](double t) { return wrap_angle(t); }));
  const ad::Tensor* in[] = {&theta};
  return ad::custom("wrap_angle", in, std::move(out),
                    [](const ad::Vector& g, ad::GradSlots s) { *s[0] += g; });
}

ad::Tensor pendulum_step(const ad::Tensor& state, const ad::Tensor& torque,
                         const PendulumParams& p, double action_bound) {
  if (state.size() != 2 || torque.size() != 1) {
    throw ConfigError("pendulum_step: expected state of size 2 and torque of size 1");
  }
  if (!state.values().allFinite()) throw NumericError("pendulum_step", state.node(), "state");
  const ad::Tensor theta = ad::slice(state, 0, 1);
  const ad::Tensor omega = ad::slice(state, 1, 1);
  const ad::Tensor a = ad::clamp(ad::reshape(torque, {1}), -action_bound, action_bound);
  const ad::Tensor accel =
      ad::sin(theta) * (-p.gravity / p.length) + a * (1.0 / (p.mass * p.length * p.length));
  const ad::Tensor omega_next = omega + accel * p.dt;
  const ad::Tensor parts[] = {theta + omega_next * p.dt, omega_next};
  return ad::concat(parts);
}

ad::Tensor pendulum_step_batch(const ad::Tensor& states, const ad::Tensor& torques,
                               const PendulumParams& p, double action_bound) {
  if (states.rank() != 2 || torques.rank() != 2 || states.dim(1) != 2 || torques.dim(1) != 1 ||
      states.dim(0) != torques.dim(0)) {
    throw ConfigError("pendulum_step: batch shape mismatch");
  }
  if (!states.values().allFinite()) throw NumericError("pendulum_step", states.node(), "state");
  const ad::Index batch = states.dim(0);
  const double gl = -p.gravity / p.length, inv_i = 1.0 / (p.mass * p.length * p.length), dt = p.dt;
  const ad::Vector& s = states.values();
  const ad::Vector& a = torques.values();
  ad::Vector out(2 * batch);
  ad::Vector mask(batch);
  for (ad::Index b = 0; b < batch; ++b) {
    const double theta = s[2 * b], omega = s[2 * b + 1];
    const double u = std::clamp(a[b], -action_bound, action_bound);
    mask[b] = (a[b] >= -action_bound && a[b] <= action_bound) ? 1.0 : 0.0;
    const double omega_next = omega + (std::sin(theta) * gl + u * inv_i) * dt;
    out[2 * b] = theta + omega_next * dt;
    out[2 * b + 1] = omega_next;
  }
  ad::Tensor result(states.shape(), std::move(out));
  if (!result.values().allFinite()) throw NumericError("pendulum_step", states.node(), "output");
  if (!states.tracked() && !torques.tracked()) return result;
  const ad::Tensor* inputs[] = {&states, &torques};
  return ad::custom("pendulum_step", inputs, std::move(result),
                    [s, mask = std::move(mask), batch, gl, inv_i, dt](const ad::Vector& g, ad::GradSlots slots) {
                      for (ad::Index b = 0; b < batch; ++b) {
                        const double g_omega = g[2 * b + 1] + g[2 * b] * dt;
                        if (slots[0]) {
                          (*slots[0])[2 * b] += g[2 * b] + g_omega * dt * gl * std::cos(s[2 * b]);
                          (*slots[0])[2 * b + 1] += g_omega;
                        }
                        if (slots[1]) (*slots[1])[b] += g_omega * dt * inv_i * mask[b];
                      }
                    });
}

Pendulum::Pendulum(PendulumParams params) : params_(params) {
  if (!(params_.gravity > 0) || !(params_.length > 0) || !(params_.mass > 0) || !(params_.dt > 0) ||
      params_.horizon < 10) {
    throw ConfigError("pendulum: physics constants must be positive and horizon >= 10");
  }
}

Eigen::VectorXd Pendulum::initial_state() const {
  return (Eigen::VectorXd(2) << params_.theta0, params_.omega0).finished();
}

ad::Tensor Pendulum::step(const ad::Tensor& state, const ad::Tensor& action) const {
  return pendulum_step(state, action, params_, action_bound());
}

ad::Tensor Pendulum::observe(const ad::Tensor& state) const {
  const ad::Tensor parts[] = {wrap_angle(ad::slice(state, 0, 1)),
                              ad::slice(state, 1, 1) * observation_scale()[1]};
  return ad::concat(parts);
}

ad::Tensor Pendulum::step_batch(const ad::Tensor& states, const ad::Tensor& actions) const {
  return pendulum_step_batch(states, actions, params_, action_bound());
}

ad::Tensor Pendulum::observe_batch(const ad::Tensor& states) const {
  if (states.rank() != 2 || states.dim(1) != 2) throw ConfigError("pendulum: observe_batch expects [B, 2]");
  const double w = observation_scale()[1];
  ad::Vector out(states.size());
  for (ad::Index b = 0; b < states.dim(0); ++b) {
    out[2 * b] = wrap_angle(states.values()[2 * b]);
    out[2 * b + 1] = states.values()[2 * b + 1] * w;
  }
  const ad::Tensor* in[] = {&states};
  return ad::custom("pendulum_observe", in, ad::Tensor(states.shape(), std::move(out)),
                    [w](const ad::Vector& g, ad::GradSlots s) {
                      for (ad::Index i = 0; i < g.size(); i += 2) {
                        (*s[0])[i] += g[i];
                        (*s[0])[i + 1] += g[i + 1] * w;
                      }
                    });
}

Eigen::VectorXd Pendulum::observation_scale() const { return (Eigen::VectorXd(2) << 1.0, 0.2).finished(); }

Eigen::VectorXd Pendulum::state_scale() const { return (Eigen::VectorXd(2) << 1.0, 0.2).finished(); }

double Pendulum::energy(double theta, double omega) const {
  const double ml = params_.mass * params_.length;
  return 0.5 * ml * params_.length * omega * omega + ml * params_.gravity * (1.0 - std::cos(theta));
}

double Pendulum::score(const Trajectory& traj) const {
  check_trajectory(*this, traj);
  const std::size_t n = traj.states.size();
  double total = 0.0;
  for (std::size_t t = n - 10; t < n; ++t) total += std::abs(wrap_angle(traj.states[t][0]));
  return -total / 10.0;
}

bool Pendulum::success(const Trajectory& traj) const { return -score(traj) < params_.success_tolerance; }

}  // namespace diffil::envs
