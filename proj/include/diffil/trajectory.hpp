// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace diffil {

/// One episode: H+1 states and the H actions between them.
struct Trajectory {
  std::string env;
  std::uint64_t seed = 0;
  std::vector<Eigen::VectorXd> states;
  std::vector<Eigen::VectorXd> actions;

  int horizon() const { return static_cast<int>(actions.size()); }

  /// Throws UsageError on length/dimension inconsistencies or non-finite values.
  void validate() const;
};

}  // namespace diffil
