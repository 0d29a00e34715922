// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "diffil/autodiff/ops.hpp"
#include "diffil/envs/cloth.hpp"
#include "diffil/envs/pendulum.hpp"
#include "diffil/envs/perturb.hpp"
#include "diffil/envs/point_mass.hpp"
#include "diffil/errors.hpp"
#include "fd_oracle.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <utility>

using namespace diffil;
using namespace diffil::envs;
using ad::Tensor;
using Eigen::VectorXd;

namespace {

// Sum of squared states over an open-loop rollout, as a function of the
// flattened action sequence.
double rollout_objective(const Env& env, const VectorXd& actions, int steps) {
  Tensor s = Tensor::vector(env.initial_state());
  double total = 0.0;
  for (int t = 0; t < steps; ++t) {
    s = env.step(s, Tensor::vector(actions.segment(t * env.action_dim(), env.action_dim())));
    total += s.values().cwiseProduct(env.state_scale()).squaredNorm();
  }
  return total;
}

VectorXd rollout_gradient(const Env& env, const VectorXd& actions, int steps) {
  ad::Tape tape;
  Tensor flat = tape.variable(Tensor::vector(actions));
  Tensor s = Tensor::vector(env.initial_state());
  Tensor total = Tensor::scalar(0.0);
  const Tensor scale = Tensor::vector(env.state_scale());
  for (int t = 0; t < steps; ++t) {
    s = env.step(s, ad::slice(flat, t * env.action_dim(), env.action_dim()));
    total = total + ad::sum(ad::square(s * scale));
  }
  return tape.backward(total).wrt(flat).values();
}

VectorXd random_actions(std::mt19937_64& rng, Eigen::Index n, double amp) {
  std::uniform_real_distribution<double> u(-amp, amp);
  VectorXd a(n);
  for (Eigen::Index i = 0; i < n; ++i) a[i] = u(rng);
  return a;
}

ClothParams small_cloth(bool unit_direction, bool normalize) {
  ClothParams p;
  p.rows = 4;
  p.cols = 4;
  p.unit_direction = unit_direction;
  p.normalize_adjoint = normalize;
  p.settle_substeps = 2000;
  return p;
}

}  // namespace

TEST_CASE("point mass update rule") {
  PointMassParams p;
  p.dim = 1;
  p.start = VectorXd::Zero(1);
  p.goal = VectorXd::Zero(1);

  Tensor s = point_mass_step(Tensor::vector({0.0, 1.0}), Tensor::vector({0.0}), p);
  CHECK(s[0] == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(s[1] == 1.0);

  // Position uses the incoming velocity. Bound raised so f = 2 is not clamped.
  p.mass = 2.0;
  s = point_mass_step(Tensor::vector({0.0, 0.0}), Tensor::vector({2.0}), p, 10.0);
  CHECK(s[0] == 0.0);
  CHECK(s[1] == doctest::Approx(0.1).epsilon(1e-15));

  // Default bound clamps the force.
  s = point_mass_step(Tensor::vector({0.0, 0.0}), Tensor::vector({2.0}), p);
  CHECK(s[1] == doctest::Approx(0.05).epsilon(1e-15));
}

TEST_CASE("point mass two-step sensitivity dx2/df0 = dt^2/m") {
  PointMassParams p;
  p.dim = 1;
  p.mass = 2.0;
  p.start = VectorXd::Zero(1);
  p.goal = VectorXd::Zero(1);
  auto x2 = [&](const VectorXd& f) {
    Tensor s = Tensor::vector({0.0, 0.0});
    s = point_mass_step(s, Tensor::vector({f[0]}), p);
    s = point_mass_step(s, Tensor::vector({f[1]}), p);
    return s[0];
  };
  const VectorXd f0 = (VectorXd(2) << 0.3, -0.2).finished();
  const VectorXd fd = testing::central_difference(x2, f0);
  CHECK(fd[0] == doctest::Approx(0.005).epsilon(1e-8));

  ad::Tape tape;
  Tensor f = tape.variable(Tensor::vector(f0));
  Tensor s = Tensor::vector({0.0, 0.0});
  s = point_mass_step(s, ad::slice(f, 0, 1), p);
  s = point_mass_step(s, ad::slice(f, 1, 1), p);
  Tensor g = tape.backward(ad::reshape(ad::slice(s, 0, 1), {})).wrt(f);
  CHECK(g[0] == doctest::Approx(0.005).epsilon(1e-12));
  CHECK(g[1] == 0.0);
}

TEST_CASE("pendulum update rule") {
  PendulumParams p;
  Tensor s = pendulum_step(Tensor::vector({0.0, 0.0}), Tensor::vector({0.0}), p);
  CHECK(s[0] == 0.0);
  CHECK(s[1] == 0.0);

  s = pendulum_step(Tensor::vector({std::numbers::pi / 2, 0.0}), Tensor::vector({0.0}), p);
  CHECK(s[1] == doctest::Approx(-0.49).epsilon(1e-14));
  CHECK(s[0] == doctest::Approx(std::numbers::pi / 2 - 0.05 * 0.49).epsilon(1e-14));
}

TEST_CASE("pendulum energy stays bounded without torque") {
  Pendulum env;
  double theta = 0.1, omega = 0.0;
  const double e0 = env.energy(theta, omega);
  double peak_first = 0.0, peak_last = 0.0;
  for (int t = 0; t < 500; ++t) {
    Tensor s = env.step(Tensor::vector({theta, omega}), Tensor::vector({0.0}));
    theta = s[0];
    omega = s[1];
    if (t < 100) peak_first = std::max(peak_first, env.energy(theta, omega));
    if (t >= 400) peak_last = std::max(peak_last, env.energy(theta, omega));
  }
  CHECK(std::abs(env.energy(theta, omega) - e0) / e0 < 0.05);
  // The oscillation envelope does not grow or shrink.
  CHECK(std::abs(peak_last - peak_first) / e0 < 1e-3);
}

TEST_CASE("wrap_angle") {
  CHECK(wrap_angle(0.0) == 0.0);
  CHECK(wrap_angle(std::numbers::pi) == doctest::Approx(std::numbers::pi));
  CHECK(wrap_angle(-std::numbers::pi) == doctest::Approx(std::numbers::pi));
  CHECK(wrap_angle(3 * std::numbers::pi / 2) == doctest::Approx(-std::numbers::pi / 2));
  ad::Tape tape;
  Tensor t = tape.variable(Tensor::vector({7.0}));
  CHECK(tape.backward(ad::sum(wrap_angle(t))).wrt(t)[0] == 1.0);
}

TEST_CASE("spring force sign and rest") {
  ClothMesh mesh;
  mesh.rows = 1;
  mesh.cols = 2;
  mesh.springs = {{0, 1}};
  mesh.rest_length = VectorXd::Constant(1, 0.5);
  mesh.is_pinned = {false, false};
  ClothParams p;
  p.gravity = 0.0;

  Eigen::Matrix3Xd x(3, 2);
  x << 0.0, 0.5, 0.0, 0.0, 0.0, 0.0;
  CHECK(cloth_forces(mesh, p, x).isZero(0.0));

  x(0, 1) = 0.8;  // stretched along +x
  Eigen::Matrix3Xd f = cloth_forces(mesh, p, x);
  CHECK(f(0, 0) > 0.0);  // node 0 pulled toward node 1
  CHECK(f(0, 1) < 0.0);
  // Raw displacement form: -k (0.8 - 0.5) * (-0.8) on node 0.
  CHECK(f(0, 0) == doctest::Approx(p.spring_k * 0.3 * 0.8));
  p.unit_direction = true;
  CHECK(cloth_forces(mesh, p, x)(0, 0) == doctest::Approx(p.spring_k * 0.3));
}

TEST_CASE("cloth momentum is conserved without gravity or pins") {
  ClothParams p;
  p.gravity = 0.0;
  p.pinned = false;
  const ClothMesh mesh = ClothMesh::grid(p);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  ClothNodes nodes{mesh.flat_positions, Eigen::Matrix3Xd::Zero(3, mesh.nodes())};
  for (Eigen::Index i = 0; i < nodes.x.size(); ++i) {
    nodes.x.data()[i] += 0.01 * n(rng);
    nodes.v.data()[i] = 0.1 * n(rng);
  }
  const Eigen::Vector3d p0 = nodes.v.rowwise().sum();
  const Eigen::Matrix3Xd none(3, 0);
  for (int i = 0; i < 100; ++i) cloth_substep(mesh, p, nodes, none);
  CHECK((nodes.v.rowwise().sum() - p0).norm() < 1e-9);
}

TEST_CASE("cloth rest grid is an equilibrium without gravity") {
  ClothParams p;
  p.gravity = 0.0;
  Cloth env(p);
  const VectorXd s0 = env.initial_state();
  CHECK(env.unpack(s0).x == env.mesh().flat_positions);
  Tensor s1 = env.step(Tensor::vector(s0), Tensor::zeros({6}));
  CHECK(s1.values() == s0);
}

TEST_CASE("cloth hanging start state is at rest") {
  Cloth env;
  const VectorXd s0 = env.initial_state();
  Tensor s1 = env.step(Tensor::vector(s0), Tensor::zeros({6}));
  CHECK((s1.values() - s0).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(env.mean_keypoint_distance(s0) == doctest::Approx(1.0));  // goal offset is one unit
}

TEST_CASE("gripper velocity moves pinned corners kinematically") {
  Cloth env;
  const VectorXd s0 = env.initial_state();
  const VectorXd a = (VectorXd(6) << 0.0, 0.0, 0.7, 0.0, 0.0, 0.7).finished();
  Tensor s1 = env.step(Tensor::vector(s0), Tensor::vector(a));
  const double lift = 50 * 2e-3 * 0.7;
  const auto before = env.unpack(s0), after = env.unpack(s1.values());
  for (int pin : env.mesh().pins) {
    CHECK(after.x(2, pin) - before.x(2, pin) == doctest::Approx(lift).epsilon(1e-12));
    CHECK(after.x(0, pin) == before.x(0, pin));
  }
  const Eigen::Matrix<double, 3, 2> moved = env.grippers(s1.values()) - env.grippers(s0);
  CHECK(moved(2, 0) == doctest::Approx(lift).epsilon(1e-12));
  CHECK(moved(2, 1) == doctest::Approx(lift).epsilon(1e-12));
}

TEST_CASE("cloth step is translation equivariant") {
  Cloth env;
  std::mt19937_64 rng(9);
  const VectorXd a = random_actions(rng, 6, 0.5);
  VectorXd s0 = env.initial_state();
  const Eigen::Vector3d shift(0.3, -1.2, 2.5);
  VectorXd shifted = s0;
  for (int i = 0; i < env.mesh().nodes(); ++i) shifted.segment<3>(6 * i) += shift;
  shifted.tail<6>() += (VectorXd(6) << shift, shift).finished();

  const VectorXd out = env.step(Tensor::vector(s0), Tensor::vector(a)).values();
  VectorXd expected = env.step(Tensor::vector(shifted), Tensor::vector(a)).values();
  for (int i = 0; i < env.mesh().nodes(); ++i) expected.segment<3>(6 * i) -= shift;
  expected.tail<6>() -= (VectorXd(6) << shift, shift).finished();
  CHECK((out - expected).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("cloth substep adjoint matches central differences") {
  for (auto [unit, damping] : {std::pair{false, 0.0}, std::pair{true, 0.0}, std::pair{false, 3.0}}) {
    CAPTURE(unit);
    CAPTURE(damping);
    ClothParams p = small_cloth(unit, false);
    p.damping = damping;
    const ClothMesh mesh = ClothMesh::grid(p);
    std::mt19937_64 rng(21);
    std::normal_distribution<double> n(0.0, 1.0);
    ClothNodes base{mesh.flat_positions, Eigen::Matrix3Xd::Zero(3, mesh.nodes())};
    for (Eigen::Index i = 0; i < base.x.size(); ++i) {
      base.x.data()[i] += 0.02 * n(rng);
      base.v.data()[i] = 0.3 * n(rng);
    }
    Eigen::Matrix3Xd pin_v(3, 2);
    pin_v << 0.1, -0.2, 0.3, 0.0, 0.5, 0.4;
    Eigen::Matrix3Xd wx(3, mesh.nodes()), wv(3, mesh.nodes());
    for (Eigen::Index i = 0; i < wx.size(); ++i) wx.data()[i] = n(rng), wv.data()[i] = n(rng);

    // Pack x, v, pin velocity into one vector for the oracle.
    const Eigen::Index nx = base.x.size();
    auto objective = [&](const VectorXd& z) {
      ClothNodes nodes{Eigen::Map<const Eigen::Matrix3Xd>(z.data(), 3, mesh.nodes()),
                       Eigen::Map<const Eigen::Matrix3Xd>(z.data() + nx, 3, mesh.nodes())};
      cloth_substep(mesh, p, nodes, Eigen::Map<const Eigen::Matrix3Xd>(z.data() + 2 * nx, 3, 2));
      return (nodes.x.cwiseProduct(wx)).sum() + (nodes.v.cwiseProduct(wv)).sum();
    };
    VectorXd z(2 * nx + 6);
    z << Eigen::Map<const VectorXd>(base.x.data(), nx), Eigen::Map<const VectorXd>(base.v.data(), nx),
        Eigen::Map<const VectorXd>(pin_v.data(), 6);
    const VectorXd fd = testing::central_difference(objective, z, 1e-6);

    Eigen::Matrix3Xd x_adj = wx, v_adj = wv, pin_adj = Eigen::Matrix3Xd::Zero(3, 2);
    cloth_substep_adjoint(mesh, p, base.x, x_adj, v_adj, pin_adj);
    VectorXd analytic(z.size());
    analytic << Eigen::Map<const VectorXd>(x_adj.data(), nx), Eigen::Map<const VectorXd>(v_adj.data(), nx),
        Eigen::Map<const VectorXd>(pin_adj.data(), 6);
    CHECK(testing::max_rel_error(analytic, fd, 1e-3) < 1e-5);
  }
}

TEST_CASE("5-step rollout action gradients match central differences") {
  std::mt19937_64 rng(17);
  std::vector<std::unique_ptr<Env>> envs;
  envs.push_back(std::make_unique<PointMass>());
  envs.push_back(std::make_unique<Pendulum>());
  envs.push_back(std::make_unique<Cloth>(small_cloth(false, false)));
  envs.push_back(std::make_unique<Cloth>(small_cloth(true, false)));
  ClothParams damped = small_cloth(false, false);
  damped.damping = 2.0;
  envs.push_back(std::make_unique<Cloth>(damped));
  for (const auto& env : envs) {
    CAPTURE(env->id());
    const int steps = 5;
    const VectorXd a = random_actions(rng, steps * env->action_dim(), 0.8);
    const VectorXd g = rollout_gradient(*env, a, steps);
    const VectorXd fd = testing::central_difference(
        [&](const VectorXd& x) { return rollout_objective(*env, x, steps); }, a);
    CHECK(testing::max_rel_error(g, fd, 1e-6) < 1e-3);
  }
}

TEST_CASE("cloth adjoint has unit norm at every step boundary when normalized") {
  Cloth env(small_cloth(false, true));
  ad::Tape tape;
  std::mt19937_64 rng(4);
  Tensor s = Tensor::vector(env.initial_state());
  Tensor loss = Tensor::scalar(0.0);
  for (int t = 0; t < 3; ++t) {
    Tensor a = tape.variable(Tensor::vector(random_actions(rng, 6, 0.5)));
    s = env.step(s, a);
    loss = loss + ad::sum(ad::square(s));
  }
  ad::Gradients g = tape.backward(loss);
  const auto steps = tape.nodes_of_kind(ad::OpKind::kCustom, "cloth_step");
  REQUIRE(steps.size() == 3);
  for (ad::NodeId id : steps) CHECK(g.at(id).norm() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(tape.nodes_of_kind(ad::OpKind::kNormalizeGrad).size() == 3);
}

TEST_CASE("no bounded action sequence destabilizes the default cloth within the horizon") {
  Cloth env;
  // Fastest possible gripper separation, then random bang-bang sequences.
  std::vector<VectorXd> plans;
  for (int sx : {-1, 1})
    for (int sy : {-1, 1})
      for (int sz : {-1, 1}) plans.push_back((VectorXd(6) << sx, sy, sz, -sx, -sy, -sz).finished());
  std::mt19937_64 rng(8);
  std::bernoulli_distribution coin(0.5);
  for (std::size_t plan = 0; plan < plans.size() + 4; ++plan) {
    Tensor s = Tensor::vector(env.initial_state());
    for (int t = 0; t < env.horizon(); ++t) {
      VectorXd a(6);
      if (plan < plans.size()) {
        a = plans[plan];
      } else {
        for (int k = 0; k < 6; ++k) a[k] = coin(rng) ? 1.0 : -1.0;
      }
      REQUIRE_NOTHROW(s = env.step(s, Tensor::vector(a)));
    }
    CHECK(s.values().allFinite());
  }
}

TEST_CASE("non-finite state raises a numeric error") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(PointMass().step(Tensor::vector({nan, 0, 0, 0}), Tensor::zeros({2})), NumericError);
  CHECK_THROWS_AS(Pendulum().step(Tensor::vector({nan, 0}), Tensor::zeros({1})), NumericError);
  Cloth env(small_cloth(false, false));
  VectorXd s = env.initial_state();
  s[0] = nan;
  CHECK_THROWS_AS(env.step(Tensor::vector(s), Tensor::zeros({6})), NumericError);

  // A blow-up mid-step names the substep.
  ClothParams p = small_cloth(false, false);
  p.spring_k = 1e12;
  Cloth stiff(p);
  VectorXd kick = Cloth(small_cloth(false, false)).initial_state();
  kick[6 * 5] += 0.05;
  try {
    stiff.step(Tensor::vector(kick), Tensor::zeros({6}));
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("substep") != std::string::npos);
  }
}

TEST_CASE("action perturbation") {
  const VectorXd a = (VectorXd(3) << 0.1, -0.2, 0.3).finished();
  ActionPerturber identity(PerturbSpec::uniform(3, 0.0, 0.0, 1));
  CHECK(identity.apply(a) == a);

  ActionPerturber shifted(PerturbSpec::uniform(3, 0.1, 0.0, 1));
  CHECK((shifted.apply(a) - a).isApprox(VectorXd::Constant(3, 0.1), 1e-15));

  ActionPerturber p1(PerturbSpec::uniform(1, 0.0, 0.05, 42)), p2(PerturbSpec::uniform(1, 0.0, 0.05, 42));
  const int n = 100000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = p1.apply(VectorXd::Zero(1))[0];
    CHECK_EQ(x, p2.apply(VectorXd::Zero(1))[0]);
    sum += x;
  }
  CHECK(std::abs(sum / n) < 3.0 * 0.05 / std::sqrt(double(n)));

  CHECK_THROWS_AS(ActionPerturber(PerturbSpec::uniform(2, 0.0, -1.0, 0)), ConfigError);
}

TEST_CASE("evaluation scores") {
  PointMass pm;
  Trajectory traj;
  traj.env = "point_mass";
  traj.states.assign(129, VectorXd::Zero(4));
  traj.actions.assign(128, VectorXd::Zero(2));
  traj.states.back().head(2) = pm.params().goal;
  CHECK(pm.score(traj) == 0.0);

  traj.actions.pop_back();
  CHECK_THROWS_AS(pm.score(traj), UsageError);

  Cloth cloth;
  Trajectory ct;
  ct.states.assign(81, cloth.initial_state());
  ct.actions.assign(80, VectorXd::Zero(6));
  CHECK(cloth.score(ct) == 0.0);
  ClothNodes at_target = cloth.unpack(cloth.initial_state());
  at_target.x = cloth.target_positions();
  ct.states.back() = cloth.pack(at_target, cloth.grippers(cloth.initial_state()));
  CHECK(cloth.mean_keypoint_distance(ct.states.back()) == 0.0);
  CHECK(cloth.score(ct) == 1.0);

  Pendulum pend;
  Trajectory pt;
  pt.states.assign(129, VectorXd::Zero(2));
  pt.actions.assign(128, VectorXd::Zero(1));
  CHECK(pend.score(pt) == 0.0);
}

TEST_CASE("env factory") {
  CHECK(make_env("point_mass")->horizon() == 128);
  CHECK(make_env("pendulum")->horizon() == 128);
  auto cloth = make_env("cloth");
  CHECK(cloth->horizon() == 80);
  CHECK(cloth->state_dim() == 390);
  CHECK(cloth->action_dim() == 6);
  CHECK_THROWS_AS(make_env("hopper"), ConfigError);
}

TEST_CASE("batched step and observe match per-row evaluation") {
  std::vector<std::unique_ptr<Env>> envs;
  envs.push_back(std::make_unique<PointMass>());
  envs.push_back(std::make_unique<Pendulum>());
  envs.push_back(std::make_unique<Cloth>(small_cloth(false, false)));
  std::mt19937_64 rng(31);
  for (const auto& env : envs) {
    CAPTURE(env->id());
    const ad::Index n = env->state_dim(), m = env->action_dim(), batch = 3;
    ad::RowMajorMatrix states(batch, n);
    for (ad::Index b = 0; b < batch; ++b) {
      states.row(b) = (env->initial_state() + random_actions(rng, n, 0.05)).transpose();
    }
    // One action per batch row, with some entries beyond the bound.
    const VectorXd actions = random_actions(rng, batch * m, 1.5);
    const VectorXd weights = random_actions(rng, batch * n, 1.0);

    ad::Tape tape;
    const Tensor s = tape.variable(Tensor::matrix(states));
    const Tensor a = tape.variable(Tensor({batch, m}, actions));
    const Tensor next = env->step_batch(s, a);
    const Tensor obs = env->observe_batch(next);
    const auto grads = tape.backward(ad::sum(ad::mul(obs, Tensor({batch, n}, weights))));

    for (ad::Index b = 0; b < batch; ++b) {
      ad::Tape row_tape;
      const Tensor rs = row_tape.variable(Tensor::vector(states.row(b).transpose()));
      const Tensor ra = row_tape.variable(Tensor::vector(actions.segment(b * m, m)));
      const Tensor rn = env->step(rs, ra);
      const Tensor ro = env->observe(rn);
      CHECK((next.values().segment(b * n, n) - rn.values()).cwiseAbs().maxCoeff() == 0.0);
      CHECK((obs.values().segment(b * n, n) - ro.values()).cwiseAbs().maxCoeff() < 1e-15);
      const auto rg = row_tape.backward(ad::sum(ad::mul(ro, Tensor::vector(weights.segment(b * n, n)))));
      CHECK((grads.wrt(s).values().segment(b * n, n) - rg.wrt(rs).values()).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((grads.wrt(a).values().segment(b * m, m) - rg.wrt(ra).values()).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}
