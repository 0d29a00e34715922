// SPDX-License-Identifier: Apache-2.0
// diffil command-line entry point.
#include "diffil/envs/env.hpp"
#include "diffil/errors.hpp"
#include "diffil/io/trajectory_io.hpp"
#include "diffil/policy/checkpoint.hpp"
#include "diffil/train/config.hpp"
#include "diffil/train/expert.hpp"
#include "diffil/train/trainer.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace diffil;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kNumeric = 3, kIo = 4 };

int thread_count() {
  const char* raw = std::getenv("DIFFIL_THREADS");
  if (raw == nullptr || *raw == '\0') return 0;
  int n = 0;
  const std::string_view s(raw);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), n);
  if (ec != std::errc() || ptr != s.data() + s.size() || n < 0) {
    throw ConfigError("DIFFIL_THREADS must be a non-negative integer, got '" + std::string(s) + "'");
  }
  return n;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

train::TrainConfig build_config(const std::string& path, const std::vector<std::string>& overrides,
                                std::optional<std::uint64_t> seed) {
  train::TrainConfig config = path.empty() ? train::TrainConfig{} : train::load_config(path);
  for (const auto& o : overrides) train::apply_override(config, o);
  if (seed) config.seed = *seed;
  config.validate();
  return config;
}

// Runs one training job into `dir`. Returns the result for summaries.
train::TrainResult run_training(const train::TrainConfig& config, const fs::path& dir) {
  fs::create_directories(dir);
  io::write_file(dir / "config.txt", train::snapshot(config));
  const auto env = envs::make_env(config.env, config.env_options());
  const Trajectory expert = train::generate_expert(*env, config.seed);
  io::write_trajectory(dir / "expert.jsonl", expert);

  std::ofstream metrics(dir / "metrics.csv", std::ios::trunc);
  if (!metrics) throw IoError("cannot write " + (dir / "metrics.csv").string());
  metrics << train::metrics_header() << '\n';

  const std::string hash = train::config_hash(config);
  auto meta = [&](std::int64_t it) { return policy::CheckpointMeta{config.env, config.seed, hash, it}; };
  train::TrainHooks hooks;
  hooks.on_metrics = [&](const train::MetricsRow& row) {
    metrics << train::metrics_line(row) << '\n';
    metrics.flush();
    std::cerr << "iter " << row.iteration << " loss " << row.train_loss << " eval " << row.nominal.mean
              << " perturbed " << row.perturbed.mean << '\n';
  };
  hooks.on_best = [&](const policy::PolicyParams& p, std::int64_t it) {
    policy::save_checkpoint(dir / "best.ckpt", p, meta(it));
  };
  hooks.on_abort = [&](const policy::PolicyParams& p, std::int64_t it) {
    policy::save_checkpoint(dir / "last_good.ckpt", p, meta(it));
  };
  train::TrainResult result = train::train(config, expert, hooks, thread_count());
  policy::save_checkpoint(dir / "final.ckpt", result.final_params, meta(config.iterations));
  return result;
}

int cmd_gen_expert(const std::string& env_id, std::uint64_t seed, const std::string& out, double damping) {
  const auto env = envs::make_env(env_id, {.cloth_damping = damping});
  const Trajectory traj = train::generate_expert(*env, seed);
  if (!out.empty()) io::write_trajectory(out, traj);
  std::cout << "env " << env_id << " horizon " << traj.horizon() << " eval_score " << fmt(env->score(traj))
            << '\n';
  return kOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::string expert;
  std::string env;
  bool perturb = false;
  double bias = 0.1;
  double noise_std = 0.05;
  int episodes = 10;
  std::uint64_t seed = 0;
  std::string csv;
  double cloth_damping = 0.0;
};

int cmd_eval(const EvalArgs& a) {
  if (a.checkpoint.empty() == a.expert.empty()) throw ConfigError("eval: give exactly one of --checkpoint or --expert");
  std::optional<train::PerturbSettings> perturb;
  if (a.perturb) perturb = train::PerturbSettings{a.bias, a.noise_std, a.seed};

  train::EvalStats stats;
  std::string env_id = a.env;
  std::string source;
  if (!a.checkpoint.empty()) {
    const policy::Checkpoint ckpt = policy::load_checkpoint(a.checkpoint);
    if (env_id.empty()) env_id = ckpt.meta.env;
    const auto env = envs::make_env(env_id, {.cloth_damping = a.cloth_damping});
    if (ckpt.params.input_dim() != env->state_dim() || ckpt.params.action_dim() != env->action_dim()) {
      throw ConfigError("checkpoint does not fit env '" + env_id + "'");
    }
    stats = train::evaluate(ckpt.params, *env, a.episodes, perturb);
    source = a.checkpoint;
  } else {
    const Trajectory expert = io::read_trajectory(a.expert);
    if (env_id.empty()) env_id = expert.env;
    const auto env = envs::make_env(env_id, {.cloth_damping = a.cloth_damping});
    stats = train::evaluate_replay(*env, expert, a.episodes, perturb);
    source = a.expert;
  }
  std::cout << "env " << env_id << (a.perturb ? " perturbed" : " nominal") << " episodes " << a.episodes
            << " mean " << fmt(stats.mean) << " std " << fmt(stats.std) << '\n';
  if (!a.csv.empty()) {
    const bool fresh = !fs::exists(a.csv);
    std::ofstream out(a.csv, std::ios::app);
    if (!out) throw IoError("cannot write " + a.csv);
    if (fresh) out << "source,env,perturbed,episodes,seed,score_mean,score_std\n";
    out << source << ',' << env_id << ',' << (a.perturb ? 1 : 0) << ',' << a.episodes << ',' << a.seed << ','
        << fmt(stats.mean) << ',' << fmt(stats.std) << '\n';
  }
  return kOk;
}

struct AblateArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string axis;
  std::string values;
  std::string seeds = "0,1,2";
  std::string out = "ablate";
};

int cmd_ablate(const AblateArgs& a) {
  static const std::map<std::string, std::string> axis_key = {{"loss", "loss"}, {"trunc", "trunc"}, {"alpha", "alpha"}};
  const auto key = axis_key.find(a.axis);
  if (key == axis_key.end()) throw ConfigError("unknown axis '" + a.axis + "' (valid axes: alpha, loss, trunc)");
  const auto values = split(a.values, ',');
  if (values.empty()) throw ConfigError("ablate: --values is empty");
  std::vector<std::uint64_t> seeds;
  for (const auto& s : split(a.seeds, ',')) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError("ablate: bad seed '" + s + "'");
    seeds.push_back(v);
  }

  // Validate the whole grid before running anything.
  std::vector<train::TrainConfig> configs;
  for (const auto& v : values) {
    for (std::uint64_t seed : seeds) {
      train::TrainConfig c = build_config(a.config, a.overrides, seed);
      train::set_key(c, key->second, v);
      c.validate();
      configs.push_back(c);
    }
  }

  fs::create_directories(a.out);
  std::ofstream summary(fs::path(a.out) / "summary.csv", std::ios::trunc);
  if (!summary) throw IoError("cannot write summary in " + a.out);
  summary << "axis,value,seed,final_score_nominal,final_score_perturbed,best_score_nominal,best_iteration\n";
  std::size_t i = 0;
  for (const auto& v : values) {
    for (std::uint64_t seed : seeds) {
      const train::TrainConfig& c = configs[i++];
      const fs::path dir = fs::path(a.out) / (a.axis + "_" + v) / ("seed_" + std::to_string(seed));
      const train::TrainResult r = run_training(c, dir);
      const train::MetricsRow& last = r.history.back();
      double best = last.nominal.mean;
      for (const auto& row : r.history) best = std::max(best, row.nominal.mean);
      summary << a.axis << ',' << v << ',' << seed << ',' << fmt(last.nominal.mean) << ','
              << fmt(last.perturbed.mean) << ',' << fmt(best) << ',' << r.best_iteration << '\n';
      summary.flush();
    }
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"diffil: imitation learning through differentiable physics"};
  app.require_subcommand(1);
  std::optional<std::uint64_t> seed;
  app.add_option("--seed", seed, "Run seed (overrides config)");

  std::string env_id = "point_mass", out_path;
  auto* gen = app.add_subcommand("gen-expert", "Write a scripted expert demonstration");
  gen->add_option("--env", env_id, "point_mass, pendulum or cloth");
  gen->add_option("--out", out_path, "Trajectory file (JSON lines)");
  gen->add_option("--seed", seed, "Seed recorded in the file");
  double gen_damping = 0.0;
  gen->add_option("--cloth-damping", gen_damping, "Cloth velocity drag (1/s)");

  std::string config_path, out_dir = "run";
  std::vector<std::string> overrides;
  auto* tr = app.add_subcommand("train", "Train a policy from one demonstration");
  tr->add_option("--config", config_path, "key = value config file");
  tr->add_option("--override", overrides, "key=value, repeatable");
  tr->add_option("--out", out_dir, "Run directory");
  tr->add_option("--seed", seed, "Run seed (overrides config)");

  EvalArgs ev;
  auto* evc = app.add_subcommand("eval", "Evaluate a checkpoint or replay an expert");
  evc->add_option("--checkpoint", ev.checkpoint);
  evc->add_option("--expert", ev.expert, "Trajectory file replayed open loop");
  evc->add_option("--env", ev.env);
  evc->add_flag("--perturb", ev.perturb, "Apply action bias and noise");
  evc->add_option("--bias", ev.bias);
  evc->add_option("--noise-std", ev.noise_std);
  evc->add_option("--episodes", ev.episodes);
  evc->add_option("--csv", ev.csv, "Append a result row");
  evc->add_option("--seed", seed);
  evc->add_option("--cloth-damping", ev.cloth_damping, "Cloth velocity drag (1/s)");

  AblateArgs ab;
  auto* abc = app.add_subcommand("ablate", "Sweep one axis over several seeds");
  abc->add_option("--config", ab.config);
  abc->add_option("--override", ab.overrides);
  abc->add_option("--axis", ab.axis, "loss, trunc or alpha")->required();
  abc->add_option("--values", ab.values, "Comma-separated values")->required();
  abc->add_option("--seeds", ab.seeds, "Comma-separated seeds");
  abc->add_option("--out", ab.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (gen->parsed()) return cmd_gen_expert(env_id, seed.value_or(0), out_path, gen_damping);
    if (tr->parsed()) {
      const train::TrainConfig config = build_config(config_path, overrides, seed);
      const train::TrainResult r = run_training(config, out_dir);
      const auto& last = r.history.back();
      std::cout << "final eval " << fmt(last.nominal.mean) << " perturbed " << fmt(last.perturbed.mean)
                << " best iteration " << r.best_iteration << '\n';
      return kOk;
    }
    if (evc->parsed()) {
      ev.seed = seed.value_or(0);
      return cmd_eval(ev);
    }
    if (abc->parsed()) return cmd_ablate(ab);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const TrainingAborted& e) {
    std::cerr << "numeric abort: " << e.what() << '\n';
    return kNumeric;
  } catch (const NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << '\n';
    return kNumeric;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const GenerationError& e) {
    std::cerr << "expert generation failed: " << e.what() << '\n';
    return kFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}
