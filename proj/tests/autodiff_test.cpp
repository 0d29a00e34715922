// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "diffil/autodiff/ops.hpp"
#include "diffil/errors.hpp"
#include "fd_oracle.hpp"

#include <functional>
#include <random>

using namespace diffil;
using namespace diffil::ad;

namespace {

using ScalarFn = std::function<Tensor(const Tensor&)>;

// Reverse-mode gradient of fn at x.
Vector tape_grad(const ScalarFn& fn, const Tensor& x) {
  Tape tape;
  Tensor v = tape.variable(x);
  Tensor out = fn(v);
  return tape.backward(out).wrt(v).values();
}

Vector fd_grad(const ScalarFn& fn, const Tensor& x) {
  return testing::central_difference(
      [&](const Vector& p) { return fn(Tensor(x.shape(), p)).item(); }, x.values());
}

Vector random_uniform(std::mt19937_64& rng, Index n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = u(rng);
  return v;
}

}  // namespace

TEST_CASE("forward examples") {
  CHECK(swish(Tensor::scalar(0.0)).item() == 0.0);

  MinResult r = min_reduce(Tensor::vector({3.0, 1.0, 2.0}), 0);
  CHECK(r.values.item() == 1.0);
  REQUIRE(r.argmin.size() == 1);
  CHECK(r.argmin[0] == 1);

  Tensor c = matmul(Tensor::zeros({2, 3}), Tensor::zeros({3, 4}));
  CHECK(c.shape() == Shape{2, 4});
}

TEST_CASE("linear and scale_columns match Eigen") {
  std::mt19937_64 rng(11);
  const Tensor x({5, 3}, random_uniform(rng, 15, -1, 1));
  const Tensor w({2, 3}, random_uniform(rng, 6, -1, 1));
  const Tensor b({2}, random_uniform(rng, 2, -1, 1));
  RowMajorMatrix expect = x.as_matrix() * w.as_matrix().transpose();
  expect.rowwise() += b.values().transpose();
  CHECK(linear(x, w, b).as_matrix().isApprox(expect, 1e-14));
  const Tensor v({3}, random_uniform(rng, 3, -1, 1));
  CHECK(scale_columns(x, v).as_matrix().isApprox(x.as_matrix() * v.values().asDiagonal(), 1e-14));
  CHECK_THROWS_AS(linear(x, w, Tensor({3}, Vector::Zero(3))), ConfigError);
}

TEST_CASE("matmul matches Eigen") {
  Eigen::MatrixXd a(2, 3), b(3, 2);
  a << 1, 2, 3, 4, 5, 6;
  b << 7, 8, 9, 10, 11, 12;
  Tensor c = matmul(Tensor::matrix(a), Tensor::matrix(b));
  Eigen::MatrixXd expected = a * b;
  for (Index i = 0; i < 2; ++i)
    for (Index j = 0; j < 2; ++j) CHECK(c.as_matrix()(i, j) == expected(i, j));

  Tensor mv = matmul(Tensor::matrix(a), Tensor::vector({1.0, 0.0, -1.0}));
  CHECK(mv.shape() == Shape{2});
  CHECK(mv[0] == -2.0);
  CHECK(mv[1] == -2.0);
}

TEST_CASE("analytic gradients") {
  SUBCASE("d/dx x^2 at 3") {
    Vector g = tape_grad([](const Tensor& x) { return sum(square(x)); }, Tensor::scalar(3.0));
    CHECK(g[0] == 6.0);
  }
  SUBCASE("d/dx min(x, c) routes to the argmin") {
    Tape tape;
    Tensor x = tape.variable(Tensor::vector({2.0}));
    Tensor c = Tensor::vector({1.0});
    Tensor both[] = {x, c};
    Tensor m = min_reduce(concat(both), 0).values;
    CHECK(tape.backward(m).wrt(x)[0] == 0.0);
  }
  SUBCASE("swish at 1 matches central differences") {
    ScalarFn fn = [](const Tensor& x) { return sum(swish(x)); };
    Vector g = tape_grad(fn, Tensor::scalar(1.0));
    Vector fd = fd_grad(fn, Tensor::scalar(1.0));
    CHECK(testing::max_rel_error(g, fd) < 1e-6);
  }
}

TEST_CASE("detach") {
  Tape tape;
  Tensor x = tape.variable(Tensor::scalar(3.0));
  Tensor d = detach(x);
  CHECK_FALSE(d.tracked());
  CHECK(d.values() == x.values());
  Tensor y = mul(d, x);
  CHECK(tape.backward(y).wrt(x).item() == 3.0);

  // Nothing flows through a detached copy, bit-exactly.
  Tensor z = sum(square(detach(square(x))));
  Tensor w = add(z, mul_scalar(x, 0.0));
  CHECK(tape.backward(w).wrt(x).item() == 0.0);
}

TEST_CASE("min-reduce gradient is one-hot on the argmin lane") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Tape tape;
    Tensor x = tape.variable(Tensor({4, 5}, random_uniform(rng, 20, -2, 2)));
    for (Index axis : {0, 1}) {
      MinResult r = min_reduce(x, axis);
      Tensor g = tape.backward(sum(r.values)).wrt(x);
      Vector expected = Vector::Zero(20);
      for (Index idx : r.argmin) expected[idx] = 1.0;
      CHECK(g.values() == expected);
    }
  }
}

TEST_CASE("min-reduce breaks ties by lowest index") {
  MinResult r = min_reduce(Tensor({2, 3}, Vector::Ones(6)), 1);
  CHECK(r.argmin == std::vector<Index>{0, 3});
  r = min_reduce(Tensor({2, 3}, Vector::Ones(6)), 0);
  CHECK(r.argmin == std::vector<Index>{0, 1, 2});
}

TEST_CASE("every differentiable op matches central differences") {
  std::mt19937_64 rng(2024);
  const Tensor w({3, 4}, random_uniform(rng, 12, -2, 2));
  const Tensor other({4}, random_uniform(rng, 4, -2, 2));
  const Tensor denom({4}, random_uniform(rng, 4, 0.5, 2));
  const Tensor pts({3, 4}, random_uniform(rng, 12, -2, 2));

  struct Case {
    const char* name;
    ScalarFn fn;
    double lo = -2.0, hi = 2.0;
  };
  // Each case maps a [4] input to a scalar through the op under test. A random
  // weighting keeps sum() from hiding sign errors.
  const Tensor weights({4}, random_uniform(rng, 4, 0.5, 1.5));
  auto wsum = [weights](const Tensor& t) { return sum(mul(t, weights)); };
  std::vector<Case> cases = {
      {"add", [&](const Tensor& x) { return wsum(add(x, other)); }},
      {"sub", [&](const Tensor& x) { return wsum(sub(other, x)); }},
      {"mul", [&](const Tensor& x) { return wsum(mul(x, x)); }},
      {"div-num", [&](const Tensor& x) { return wsum(div(x, denom)); }},
      {"div-den", [&](const Tensor& x) { return wsum(div(other, x)); }, 0.5, 2.0},
      {"broadcast", [&](const Tensor& x) { return sum(mul(other, reshape(slice(x, 1, 1), {}))); }},
      {"neg", [&](const Tensor& x) { return wsum(neg(x)); }},
      {"scalar ops", [&](const Tensor& x) { return wsum(add_scalar(mul_scalar(x, -1.5), 0.3)); }},
      {"matmul-right", [&](const Tensor& x) { return sum(square(matmul(w, x))); }},
      {"matmul-left", [&](const Tensor& x) { return sum(square(matmul(reshape(slice(x, 0, 3), {3}), w))); }},
      {"linear-x", [&](const Tensor& x) {
         Tensor rows[] = {x, cos(x)};
         return sum(square(linear(stack(rows), w, slice(other, 0, 3))));
       }},
      {"linear-w", [&](const Tensor& x) {
         Tensor rows[] = {x, x, sin(x)};
         return sum(square(linear(pts, reshape(stack(rows), {3, 4}), slice(x, 1, 3))));
       }},
      {"scale_columns", [&](const Tensor& x) {
         Tensor rows[] = {x, square(x)};
         return sum(square(scale_columns(stack(rows), sin(x))));
       }},
      {"mean", [&](const Tensor& x) { return mean(square(x)); }},
      {"square", [&](const Tensor& x) { return wsum(square(x)); }},
      {"sqrt", [&](const Tensor& x) { return wsum(sqrt(x)); }, 0.5, 2.0},
      {"exp", [&](const Tensor& x) { return wsum(exp(x)); }},
      {"log", [&](const Tensor& x) { return wsum(log(x)); }, 0.5, 2.0},
      {"tanh", [&](const Tensor& x) { return wsum(tanh(x)); }},
      {"sigmoid", [&](const Tensor& x) { return wsum(sigmoid(x)); }},
      {"swish", [&](const Tensor& x) { return wsum(swish(x)); }},
      {"sin", [&](const Tensor& x) { return wsum(sin(x)); }},
      {"cos", [&](const Tensor& x) { return wsum(cos(x)); }},
      {"clamp", [&](const Tensor& x) { return wsum(square(clamp(x, -1.0, 1.0))); }},
      {"concat", [&](const Tensor& x) {
         Tensor parts[] = {x, other, square(x)};
         return sum(square(concat(parts)));
       }},
      {"stack", [&](const Tensor& x) {
         Tensor rows[] = {x, sin(x)};
         return sum(matmul(stack(rows), other));
       }},
      {"gather", [&](const Tensor& x) {
         const Index idx[] = {3, 0, 0, 2};
         return wsum(square(gather(x, idx)));
       }},
      {"pairwise", [&](const Tensor& x) {
         Tensor rows[] = {x, mul_scalar(x, 0.5)};
         return sum(pairwise_sq_dist(stack(rows), pts));
       }},
      {"pairwise-right", [&](const Tensor& x) {
         Tensor rows[] = {x, other};
         return sum(pairwise_sq_dist(pts, stack(rows)));
       }},
      {"min_reduce", [&](const Tensor& x) {
         Tensor rows[] = {x, other};
         return sum(min_reduce(pairwise_sq_dist(stack(rows), pts), 1).values);
       }},
  };

  for (const Case& c : cases) {
    CAPTURE(c.name);
    for (int trial = 0; trial < 5; ++trial) {
      Tensor x({4}, random_uniform(rng, 4, c.lo, c.hi));
      // Clamp and min have kinks; keep samples off them.
      if (std::string(c.name) == "clamp" && ((x.values().array().abs() - 1.0).abs() < 1e-3).any()) continue;
      Vector g = tape_grad(c.fn, x);
      Vector fd = fd_grad(c.fn, x);
      CHECK(testing::max_rel_error(g, fd) < 1e-4);
    }
  }
}

TEST_CASE("backward is linear over summed graphs") {
  std::mt19937_64 rng(5);
  Tensor x0({6}, random_uniform(rng, 6, -2, 2));
  ScalarFn f = [](const Tensor& x) { return sum(swish(x)); };
  ScalarFn g = [](const Tensor& x) { return mean(mul(exp(x), sin(x))); };
  Vector sum_grad = tape_grad([&](const Tensor& x) { return add(f(x), g(x)); }, x0);
  Vector separate = tape_grad(f, x0) + tape_grad(g, x0);
  CHECK((sum_grad - separate).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("normalize_grad rescales the adjoint to unit norm") {
  Tape tape;
  Tensor x = tape.variable(Tensor::vector({1.0, 2.0, 3.0}));
  Tensor y = normalize_grad(mul_scalar(x, 1.0));
  Tensor loss = sum(mul(y, Tensor::vector({3.0, 4.0, 0.0})));
  Gradients grads = tape.backward(loss);
  CHECK(grads.wrt(x).values().norm() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(grads.wrt(x)[0] == doctest::Approx(0.6));
}

TEST_CASE("error paths") {
  Tape tape;
  Tensor v = tape.variable(Tensor::vector({1.0, 2.0}));
  CHECK_THROWS_AS(tape.backward(v), UsageError);
  CHECK_THROWS_AS(add(v, Tensor::vector({1.0, 2.0, 3.0})), ConfigError);
  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ConfigError);
  CHECK_THROWS_AS(reshape(v, {3}), ConfigError);
  CHECK_THROWS_AS(Tensor({2, 2}, Vector::Zero(3)), ConfigError);

  try {
    log(mul_scalar(v, -1.0));
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(e.op() == "log");
    CHECK(e.node() == static_cast<NodeId>(tape.size()));
  }
  CHECK_THROWS_AS(exp(Tensor::scalar(1e6)), NumericError);

  Tape other;
  Tensor w = other.variable(Tensor::vector({1.0, 2.0}));
  CHECK_THROWS_AS(add(v, w), UsageError);
}

TEST_CASE("tape nodes only reference earlier nodes and gradients cover every tracked tensor") {
  Tape tape;
  Tensor x = tape.variable(Tensor::vector({0.5, -0.25}));
  Tensor y = tanh(matmul(Tensor::matrix(Eigen::Matrix2d::Identity()), x));
  Tensor loss = sum(square(y));
  Gradients g = tape.backward(loss);
  CHECK(x.node() < y.node());
  CHECK(y.node() < loss.node());
  CHECK(g.at(y.node()).size() == 2);
  CHECK(g.wrt(Tensor::scalar(1.0)).item() == 0.0);
}
