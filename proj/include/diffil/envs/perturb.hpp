// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>

namespace diffil::envs {

/// Evaluation-time action corruption: a' = a + bias + N(0, diag(noise_std^2)).
struct PerturbSpec {
  Eigen::VectorXd bias;
  Eigen::VectorXd noise_std;
  std::uint64_t seed = 0;

  static PerturbSpec uniform(Eigen::Index action_dim, double bias, double noise_std,
                             std::uint64_t seed);
  bool is_identity() const;
};

/// Stateful sampler for one evaluation episode.
class ActionPerturber {
 public:
  explicit ActionPerturber(PerturbSpec spec);
  Eigen::VectorXd apply(const Eigen::VectorXd& action);

 private:
  PerturbSpec spec_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace diffil::envs
