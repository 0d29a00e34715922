// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <cstdint>

namespace diffil::train {

/// Bias-corrected Adam over a flat parameter vector.
struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState zeros(Eigen::Index n);
};

void adam_update(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& state, double lr);

/// Rescales `grad` to norm c when its L2 norm exceeds c. Returns the norm
/// before clipping.
double clip_global_norm(Eigen::VectorXd& grad, double c);

}  // namespace diffil::train
