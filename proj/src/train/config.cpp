// SPDX-License-Identifier: Apache-2.0
#include "diffil/train/config.hpp"

#include "diffil/envs/env.hpp"
#include "diffil/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace diffil::train {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* expected) {
  throw ConfigError("config key '" + std::string(key) + "': expected " + expected + ", got '" +
                    std::string(value) + "'");
}

template <typename T>
T parse_number(std::string_view key, std::string_view value, const char* expected) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) bad_value(key, value, expected);
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value, "true or false");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void require(bool ok, const char* key, const std::string& why) {
  if (!ok) throw ConfigError("config key '" + std::string(key) + "': " + why);
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "env",          "alpha",         "trunc",         "batch_size",   "learning_rate",
      "clip_norm",    "iterations",    "bc_steps",      "seed",         "eval_every",
      "eval_episodes", "loss",         "normalize_adjoint", "perturb_bias", "perturb_std",
      "hidden1",      "hidden2",       "cloth_damping", "record_wall_time"};
  return keys;
}

void set_key(TrainConfig& c, std::string_view key, std::string_view value) {
  value = trim(value);
  if (key == "env") c.env = std::string(value);
  else if (key == "alpha") c.alpha = parse_number<double>(key, value, "a number");
  else if (key == "trunc") c.trunc = parse_number<int>(key, value, "an integer");
  else if (key == "batch_size") c.batch_size = parse_number<int>(key, value, "an integer");
  else if (key == "learning_rate") c.learning_rate = parse_number<double>(key, value, "a number");
  else if (key == "clip_norm") c.clip_norm = parse_number<double>(key, value, "a number");
  else if (key == "iterations") c.iterations = parse_number<int>(key, value, "an integer");
  else if (key == "bc_steps") c.bc_steps = parse_number<int>(key, value, "an integer");
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value, "an unsigned integer");
  else if (key == "eval_every") c.eval_every = parse_number<int>(key, value, "an integer");
  else if (key == "eval_episodes") c.eval_episodes = parse_number<int>(key, value, "an integer");
  else if (key == "loss") c.loss = loss::parse_kind(value);
  else if (key == "normalize_adjoint") c.normalize_adjoint = parse_bool(key, value);
  else if (key == "perturb_bias") c.perturb_bias = parse_number<double>(key, value, "a number");
  else if (key == "perturb_std") c.perturb_std = parse_number<double>(key, value, "a number");
  else if (key == "hidden1") c.hidden1 = parse_number<int>(key, value, "an integer");
  else if (key == "hidden2") c.hidden2 = parse_number<int>(key, value, "an integer");
  else if (key == "cloth_damping") c.cloth_damping = parse_number<double>(key, value, "a number");
  else if (key == "record_wall_time") c.record_wall_time = parse_bool(key, value);
  else throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void apply_override(TrainConfig& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("override '" + std::string(assignment) + "' is not of the form key=value");
  }
  set_key(config, trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void TrainConfig::validate() const {
  const auto& ids = envs::env_ids();
  require(std::find(ids.begin(), ids.end(), env) != ids.end(), "env", "unknown env '" + env + "'");
  require(alpha >= 0.0, "alpha", "must be >= 0");
  require(trunc >= 1, "trunc", "must be >= 1");
  require(batch_size >= 1, "batch_size", "must be >= 1");
  require(learning_rate > 0.0, "learning_rate", "must be > 0");
  require(clip_norm > 0.0, "clip_norm", "must be > 0");
  require(iterations >= 0, "iterations", "must be >= 0");
  require(bc_steps >= 0, "bc_steps", "must be >= 0");
  require(eval_every >= 1, "eval_every", "must be >= 1");
  require(eval_episodes >= 1, "eval_episodes", "must be >= 1");
  require(perturb_std >= 0.0, "perturb_std", "must be >= 0");
  require(hidden1 >= 1, "hidden1", "must be >= 1");
  require(hidden2 >= 1, "hidden2", "must be >= 1");
  require(cloth_damping >= 0.0, "cloth_damping", "must be >= 0");
}

TrainConfig parse_config(std::string_view text) {
  TrainConfig c;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    set_key(c, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  c.validate();
  return c;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string snapshot(const TrainConfig& c) {
  std::ostringstream out;
  out << "env = " << c.env << '\n'
      << "alpha = " << fmt(c.alpha) << '\n'
      << "trunc = " << c.trunc << '\n'
      << "batch_size = " << c.batch_size << '\n'
      << "learning_rate = " << fmt(c.learning_rate) << '\n'
      << "clip_norm = " << fmt(c.clip_norm) << '\n'
      << "iterations = " << c.iterations << '\n'
      << "bc_steps = " << c.bc_steps << '\n'
      << "seed = " << c.seed << '\n'
      << "eval_every = " << c.eval_every << '\n'
      << "eval_episodes = " << c.eval_episodes << '\n'
      << "loss = " << loss::kind_name(c.loss) << '\n'
      << "normalize_adjoint = " << (c.normalize_adjoint ? "true" : "false") << '\n'
      << "perturb_bias = " << fmt(c.perturb_bias) << '\n'
      << "perturb_std = " << fmt(c.perturb_std) << '\n'
      << "hidden1 = " << c.hidden1 << '\n'
      << "hidden2 = " << c.hidden2 << '\n'
      << "cloth_damping = " << fmt(c.cloth_damping) << '\n'
      << "record_wall_time = " << (c.record_wall_time ? "true" : "false") << '\n';
  return out.str();
}

std::string config_hash(const TrainConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char ch : snapshot(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace diffil::train
