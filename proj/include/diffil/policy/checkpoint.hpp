// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "diffil/policy/mlp_policy.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace diffil::policy {

struct CheckpointMeta {
  std::string env;
  std::uint64_t seed = 0;
  std::string config_hash;
  /// Training iteration the parameters come from; -1 for BC-only.
  std::int64_t iteration = -1;
};

struct Checkpoint {
  PolicyParams params;
  CheckpointMeta meta;
};

// File layout: one JSON header line
//   {"format":"diffil-checkpoint","version":1,"env":...,"seed":...,
//    "config_hash":...,"iteration":...,"tensors":[{"name":...,"shape":[...]},...]}
// followed by the tensors' values as little-endian float64, in header order.

void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params,
                     const CheckpointMeta& meta);
/// Throws IoError on a missing or malformed file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace diffil::policy
