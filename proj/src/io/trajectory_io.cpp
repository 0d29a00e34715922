// SPDX-License-Identifier: Apache-2.0
#include "diffil/io/trajectory_io.hpp"

#include "diffil/errors.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace diffil::io {
namespace {

constexpr int kVersion = 1;

void append_array(std::string& out, const Eigen::VectorXd& v) {
  char buf[32];
  out += '[';
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    std::snprintf(buf, sizeof buf, "%.17g", v[i]);
    out += buf;
  }
  out += ']';
}

Eigen::VectorXd to_vector(const nlohmann::json& arr) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i) v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
  return v;
}

}  // namespace

std::string format_trajectory(const Trajectory& traj) {
  traj.validate();
  const nlohmann::ordered_json header = {{"env", traj.env},
                                 {"horizon", traj.horizon()},
                                 {"state_dim", traj.states.front().size()},
                                 {"action_dim", traj.actions.empty() ? 0 : traj.actions.front().size()},
                                 {"seed", traj.seed},
                                 {"version", kVersion}};
  std::string out = header.dump() + '\n';
  for (std::size_t t = 0; t < traj.states.size(); ++t) {
    out += "{\"t\":" + std::to_string(t) + ",\"state\":";
    append_array(out, traj.states[t]);
    out += ",\"action\":";
    append_array(out, t < traj.actions.size() ? traj.actions[t] : Eigen::VectorXd());
    out += "}\n";
  }
  return out;
}

Trajectory parse_trajectory(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  Trajectory traj;
  try {
    if (!std::getline(in, line)) throw IoError("trajectory: empty file");
    const auto header = nlohmann::json::parse(line);
    if (header.at("version").get<int>() != kVersion) throw IoError("trajectory: unsupported version");
    traj.env = header.at("env").get<std::string>();
    traj.seed = header.at("seed").get<std::uint64_t>();
    const int horizon = header.at("horizon").get<int>();
    const auto n = header.at("state_dim").get<Eigen::Index>();
    const auto m = header.at("action_dim").get<Eigen::Index>();
    for (int t = 0; t <= horizon; ++t) {
      if (!std::getline(in, line)) throw IoError("trajectory: expected " + std::to_string(horizon + 1) + " steps");
      const auto row = nlohmann::json::parse(line);
      if (row.at("t").get<int>() != t) throw IoError("trajectory: step index out of order at line " + std::to_string(t + 2));
      traj.states.push_back(to_vector(row.at("state")));
      if (traj.states.back().size() != n) throw IoError("trajectory: state size mismatch at step " + std::to_string(t));
      const Eigen::VectorXd a = to_vector(row.at("action"));
      if (t < horizon) {
        if (a.size() != m) throw IoError("trajectory: action size mismatch at step " + std::to_string(t));
        traj.actions.push_back(a);
      } else if (a.size() != 0) {
        throw IoError("trajectory: final step must have an empty action");
      }
    }
    while (std::getline(in, line)) {
      if (!line.empty()) throw IoError("trajectory: trailing content");
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("trajectory: malformed JSON: ") + e.what());
  }
  try {
    traj.validate();
  } catch (const UsageError& e) {
    throw IoError(std::string("trajectory: ") + e.what());
  }
  return traj;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << contents;
  if (!out) throw IoError("failed writing " + path.string());
}

void write_trajectory(const std::filesystem::path& path, const Trajectory& traj) {
  write_file(path, format_trajectory(traj));
}

Trajectory read_trajectory(const std::filesystem::path& path) { return parse_trajectory(read_file(path)); }

}  // namespace diffil::io
