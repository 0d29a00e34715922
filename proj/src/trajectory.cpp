// SPDX-License-Identifier: Apache-2.0
#include "diffil/trajectory.hpp"

#include "diffil/errors.hpp"

namespace diffil {

void Trajectory::validate() const {
  if (states.empty()) throw UsageError("trajectory has no states");
  if (states.size() != actions.size() + 1) {
    throw UsageError("trajectory needs |states| == |actions| + 1, got " +
                     std::to_string(states.size()) + " states and " +
                     std::to_string(actions.size()) + " actions");
  }
  const auto sdim = states.front().size();
  for (std::size_t t = 0; t < states.size(); ++t) {
    if (states[t].size() != sdim) throw UsageError("state " + std::to_string(t) + " has wrong dimension");
    if (!states[t].allFinite()) throw UsageError("state " + std::to_string(t) + " is not finite");
  }
  if (actions.empty()) return;
  const auto adim = actions.front().size();
  for (std::size_t t = 0; t < actions.size(); ++t) {
    if (actions[t].size() != adim) throw UsageError("action " + std::to_string(t) + " has wrong dimension");
    if (!actions[t].allFinite()) throw UsageError("action " + std::to_string(t) + " is not finite");
  }
}

}  // namespace diffil
