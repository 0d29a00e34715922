// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "diffil/autodiff/ops.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace diffil::policy {

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

/// Weights of a 3-layer Swish MLP Gaussian policy with a state-independent
/// log-std vector.
struct PolicyParams {
  std::vector<Eigen::MatrixXd> weights;  // [out, in]
  std::vector<Eigen::VectorXd> biases;
  Eigen::VectorXd log_std;

  /// Uniform(+-1/sqrt(fan_in)) weights and biases, log_std = -1.
  static PolicyParams init(Eigen::Index input_dim, Eigen::Index hidden1, Eigen::Index hidden2,
                           Eigen::Index action_dim, std::mt19937_64& rng);

  Eigen::Index input_dim() const { return weights.front().cols(); }
  Eigen::Index action_dim() const { return weights.back().rows(); }
  Eigen::Index num_parameters() const;

  /// Named tensors in a fixed order: l{i}.weight, l{i}.bias, ..., log_std.
  std::vector<std::string> names() const;
  std::vector<ad::Shape> shapes() const;

  /// All parameters in name order; weights row-major.
  Eigen::VectorXd flatten() const;
  void assign(const Eigen::VectorXd& flat);

  bool all_finite() const;
};

/// Parameters as tensors, either constants or leaves on a tape.
struct PolicyTensors {
  std::vector<ad::Tensor> weights;
  std::vector<ad::Tensor> biases;
  ad::Tensor log_std;

  static PolicyTensors constant(const PolicyParams& params);
  static PolicyTensors bind(const PolicyParams& params, ad::Tape& tape);

  /// dL/d(params) flattened in PolicyParams::flatten() order.
  Eigen::VectorXd gradient(const ad::Gradients& grads) const;
};

struct PolicyOutput {
  ad::Tensor mean;
  ad::Tensor log_std;
};

/// mu = W3 swish(W2 swish(W1 obs + b1) + b2) + b3; log_std clamped to
/// [kLogStdMin, kLogStdMax]. A [B, in] observation gives a [B, action] mean.
PolicyOutput forward(const PolicyTensors& policy, const ad::Tensor& observation);

/// Reparameterized draw clamp(mu + exp(log_std) * eps). eps enters as a constant
/// laid out like mu (row-major for a batch).
ad::Tensor sample(const PolicyOutput& out, const Eigen::VectorXd& eps, double action_bound);

/// clamp(mu): the deterministic evaluation action.
ad::Tensor mean_action(const PolicyOutput& out, double action_bound);

}  // namespace diffil::policy
