// SPDX-License-Identifier: Apache-2.0
#include "diffil/envs/perturb.hpp"

#include "diffil/errors.hpp"

namespace diffil::envs {

PerturbSpec PerturbSpec::uniform(Eigen::Index action_dim, double bias, double noise_std,
                                 std::uint64_t seed) {
  return {Eigen::VectorXd::Constant(action_dim, bias),
          Eigen::VectorXd::Constant(action_dim, noise_std), seed};
}

bool PerturbSpec::is_identity() const {
  return (bias.size() == 0 || bias.isZero(0.0)) && (noise_std.size() == 0 || noise_std.isZero(0.0));
}

ActionPerturber::ActionPerturber(PerturbSpec spec) : spec_(std::move(spec)), rng_(spec_.seed) {
  if (spec_.bias.size() != spec_.noise_std.size()) {
    throw ConfigError("perturbation bias and noise_std dimensions differ");
  }
  if ((spec_.noise_std.array() < 0.0).any()) throw ConfigError("perturbation noise_std must be >= 0");
}

Eigen::VectorXd ActionPerturber::apply(const Eigen::VectorXd& action) {
  if (spec_.bias.size() == 0) return action;
  if (action.size() != spec_.bias.size()) throw UsageError("perturbation dimension mismatch");
  Eigen::VectorXd out = action + spec_.bias;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    // Always draw so the noise sequence does not depend on which dims are noisy.
    const double eta = normal_(rng_);
    out[i] += spec_.noise_std[i] * eta;
  }
  return out;
}

}  // namespace diffil::envs
