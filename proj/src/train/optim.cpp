// SPDX-License-Identifier: Apache-2.0
#include "diffil/train/optim.hpp"

#include "diffil/errors.hpp"

#include <cmath>

namespace diffil::train {

AdamState AdamState::zeros(Eigen::Index n) {
  AdamState s;
  s.m = Eigen::VectorXd::Zero(n);
  s.v = Eigen::VectorXd::Zero(n);
  return s;
}

void adam_update(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& s, double lr) {
  if (grad.size() != params.size() || s.m.size() != params.size() || s.v.size() != params.size()) {
    throw UsageError("adam_update: size mismatch");
  }
  ++s.step;
  s.m = s.beta1 * s.m + (1.0 - s.beta1) * grad;
  s.v = s.beta2 * s.v + (1.0 - s.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  params.array() -= lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + s.eps);
}

double clip_global_norm(Eigen::VectorXd& grad, double c) {
  const double norm = grad.norm();
  if (norm > c) grad *= c / norm;
  return norm;
}

}  // namespace diffil::train
