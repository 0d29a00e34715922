// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "diffil/trajectory.hpp"

#include <filesystem>
#include <string>

namespace diffil::io {

// JSON lines. Header:
//   {"version":1,"env":...,"horizon":H,"state_dim":n,"action_dim":m,"seed":s}
// then H + 1 lines {"t":t,"state":[...],"action":[...]}; the last action is
// empty. Numbers use 17 significant digits, so write -> read -> write is
// byte-identical.
std::string format_trajectory(const Trajectory& traj);
Trajectory parse_trajectory(const std::string& text);

void write_trajectory(const std::filesystem::path& path, const Trajectory& traj);
/// Throws IoError on a missing or malformed file.
Trajectory read_trajectory(const std::filesystem::path& path);

/// Whole-file helpers that throw IoError.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace diffil::io
