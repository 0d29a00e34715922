// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "diffil/envs/env.hpp"
#include "diffil/loss/losses.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace diffil::train {

struct TrainConfig {
  std::string env = "point_mass";
  double alpha = 1.0;
  /// Truncation length K: the carried state is detached every `trunc` steps.
  int trunc = 10;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double clip_norm = 0.3;
  int iterations = 5000;
  int bc_steps = 500;
  std::uint64_t seed = 0;
  int eval_every = 50;
  int eval_episodes = 10;
  loss::Kind loss = loss::Kind::kChamfer;
  bool normalize_adjoint = true;
  double perturb_bias = 0.1;
  double perturb_std = 0.05;
  int hidden1 = 64;
  int hidden2 = 64;
  /// Velocity drag for the cloth env (1/s); ignored elsewhere.
  double cloth_damping = 0.0;
  /// Off by default so metrics files are byte-identical across runs.
  bool record_wall_time = false;

  /// Throws ConfigError naming the offending key.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;

  envs::EnvOptions env_options() const { return {normalize_adjoint, cloth_damping}; }
};

/// Keys accepted by set_key / parse_config, in snapshot order.
const std::vector<std::string>& config_keys();

/// Assign one key from its text form. Throws ConfigError naming the key.
void set_key(TrainConfig& config, std::string_view key, std::string_view value);
/// "key=value" form used by --override.
void apply_override(TrainConfig& config, std::string_view assignment);

/// Flat `key = value` lines; `#` starts a comment. Missing keys keep their
/// defaults. The result is validated.
TrainConfig parse_config(std::string_view text);
TrainConfig load_config(const std::string& path);

/// Every key with its effective value; parse_config(snapshot(c)) == c.
std::string snapshot(const TrainConfig& config);
/// 16 hex digits of FNV-1a over the snapshot.
std::string config_hash(const TrainConfig& config);

}  // namespace diffil::train
