// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "diffil/envs/env.hpp"
#include "diffil/envs/perturb.hpp"
#include "diffil/trajectory.hpp"

#include <cstdint>
#include <optional>

namespace diffil::train {

// Scripted controllers.
//   point_mass: PD toward the goal, f = kp (goal - x) - kd v.
//   pendulum:   coast over the top, brake -2 E omega in the lower half until
//               E < 0.3, then PD hold at theta = 0.
//   cloth:      both grippers follow lift / translate / lower / hold bumps.
inline constexpr double kPointMassKp = 0.36;
inline constexpr double kPointMassKd = 1.2;

/// One full-horizon demonstration. Throws GenerationError if the scripted
/// controller fails the env's own success predicate.
Trajectory generate_expert(const envs::Env& env, std::uint64_t seed);

/// Open-loop replay of `actions` from the env's start state, optionally
/// corrupting each action first. Stored actions are the commanded ones.
Trajectory replay(const envs::Env& env, const std::vector<Eigen::VectorXd>& actions,
                  std::optional<envs::PerturbSpec> perturb = std::nullopt);

}  // namespace diffil::train
