// SPDX-License-Identifier: Apache-2.0
#include "diffil/loss/losses.hpp"

#include "diffil/errors.hpp"

#include <string>

namespace diffil::loss {
namespace {

void check_pair(const ad::Tensor& learner, const ad::Tensor& expert, const char* op) {
  if (learner.rank() != 2 || expert.rank() != 2) throw UsageError(std::string(op) + ": expected [T, d] inputs");
  if (learner.dim(0) == 0 || expert.dim(0) == 0) throw UsageError(std::string(op) + ": empty trajectory");
  if (learner.dim(1) != expert.dim(1)) throw UsageError(std::string(op) + ": state dimensions differ");
}

ad::Tensor distances(const ad::Tensor& learner, const ad::Tensor& expert, const char* op) {
  check_pair(learner, expert, op);
  return ad::pairwise_sq_dist(learner, ad::detach(expert));
}

void check_alpha(double alpha) {
  if (!(alpha >= 0.0)) throw ConfigError("alpha must be >= 0, got " + std::to_string(alpha));
}

}  // namespace

ad::Tensor deviation_loss(const ad::Tensor& learner, const ad::Tensor& expert) {
  return ad::mean(ad::min_reduce(distances(learner, expert, "deviation_loss"), 1).values);
}

ad::Tensor coverage_loss(const ad::Tensor& learner, const ad::Tensor& expert) {
  return ad::mean(ad::min_reduce(distances(learner, expert, "coverage_loss"), 0).values);
}

ad::Tensor chamfer_alpha(const ad::Tensor& learner, const ad::Tensor& expert, double alpha) {
  check_alpha(alpha);
  return trajectory_loss(Kind::kChamfer, learner, expert, alpha).total;
}

ad::Tensor l2_loss(const ad::Tensor& learner, const ad::Tensor& expert) {
  check_pair(learner, expert, "l2_loss");
  if (learner.dim(0) != expert.dim(0)) {
    throw UsageError("l2_loss: length mismatch " + std::to_string(learner.dim(0)) + " vs " +
                     std::to_string(expert.dim(0)));
  }
  const ad::Tensor diff = learner - ad::detach(expert);
  return ad::mul_scalar(ad::sum(ad::square(diff)), 1.0 / static_cast<double>(learner.dim(0)));
}

Kind parse_kind(std::string_view name) {
  if (name == "chamfer") return Kind::kChamfer;
  if (name == "l2") return Kind::kL2;
  throw ConfigError("unknown loss '" + std::string(name) + "' (expected chamfer or l2)");
}

std::string_view kind_name(Kind kind) { return kind == Kind::kChamfer ? "chamfer" : "l2"; }

Terms trajectory_loss(Kind kind, const ad::Tensor& learner, const ad::Tensor& expert, double alpha) {
  check_alpha(alpha);
  const ad::Tensor d = distances(learner, expert, "trajectory_loss");
  const ad::Tensor dev = ad::mean(ad::min_reduce(d, 1).values);
  const ad::Tensor cov = ad::mean(ad::min_reduce(d, 0).values);
  Terms t;
  t.deviation = dev.item();
  t.coverage = cov.item();
  if (kind == Kind::kChamfer) {
    t.total = alpha == 0.0 ? cov : cov + ad::mul_scalar(dev, alpha);
  } else {
    t.total = l2_loss(learner, expert);
  }
  return t;
}

ad::Tensor stack_scaled(std::span<const ad::Tensor> states, const Eigen::VectorXd& scale) {
  if (states.empty()) throw UsageError("stack_scaled: empty trajectory");
  const ad::Tensor s = ad::Tensor::vector(scale);
  std::vector<ad::Tensor> rows;
  rows.reserve(states.size());
  for (const ad::Tensor& x : states) rows.push_back(ad::mul(x, s));
  return ad::stack(rows);
}

ad::Tensor stack_scaled(const Trajectory& traj, const Eigen::VectorXd& scale) {
  std::vector<ad::Tensor> rows;
  rows.reserve(traj.states.size());
  for (const auto& x : traj.states) rows.push_back(ad::Tensor::vector(x));
  return stack_scaled(rows, scale);
}

}  // namespace diffil::loss
