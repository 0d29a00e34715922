// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "diffil/io/trajectory_io.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using diffil::io::read_file;

namespace {

const fs::path kWork = fs::temp_directory_path() / "diffil_cli_test";

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(const std::string& args, const std::string& env = "") {
  fs::create_directories(kWork);
  const fs::path out = kWork / "stdout.txt", err = kWork / "stderr.txt";
  const std::string cmd = env + " " + DIFFIL_CLI + " " + args + " > " + out.string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_file(out), read_file(err)};
}

std::string p(const std::string& name) { return (kWork / name).string(); }

int count_lines(const std::string& text) {
  int n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

const std::string kTiny =
    "--override iterations=2 --override bc_steps=5 --override batch_size=2 --override eval_episodes=1 "
    "--override eval_every=1 --override hidden1=8 --override hidden2=8";

}  // namespace

TEST_CASE("gen-expert") {
  Result r = run("gen-expert --env point_mass --seed 7 --out " + p("pm.jsonl"));
  REQUIRE(r.code == 0);
  CHECK(r.out.find("horizon 128") != std::string::npos);
  const auto t = diffil::io::read_trajectory(p("pm.jsonl"));
  CHECK(t.horizon() == 128);
  CHECK(t.seed == 7);
  REQUIRE(run("gen-expert --env point_mass --seed 7 --out " + p("pm2.jsonl")).code == 0);
  CHECK(read_file(p("pm.jsonl")) == read_file(p("pm2.jsonl")));

  r = run("gen-expert --env cloth --out " + p("cloth.jsonl"));
  REQUIRE(r.code == 0);
  CHECK(diffil::io::read_trajectory(p("cloth.jsonl")).horizon() == 80);
  CHECK(r.out.find("eval_score 1") != std::string::npos);

  CHECK(run("gen-expert --env hopper").code == 2);
}

TEST_CASE("train") {
  const std::string cfg = p("base.cfg");
  std::ofstream(cfg) << "# alpha left at its default\nenv = point_mass\n";
  Result r = run("train --config " + cfg + " " + kTiny + " --out " + p("run_a"));
  REQUIRE(r.code == 0);
  const std::string snap = read_file(p("run_a/config.txt"));
  CHECK(snap.find("alpha = 1\n") != std::string::npos);
  CHECK(snap.find("iterations = 2\n") != std::string::npos);
  const std::string metrics = read_file(p("run_a/metrics.csv"));
  CHECK(count_lines(metrics) >= 2);
  for (const char* f : {"expert.jsonl", "best.ckpt", "final.ckpt"}) CHECK(fs::exists(kWork / "run_a" / f));

  // Same config, sequential mode: identical metrics.
  REQUIRE(run("train --config " + cfg + " " + kTiny + " --out " + p("run_b"), "DIFFIL_THREADS=0").code == 0);
  CHECK(read_file(p("run_b/metrics.csv")) == metrics);
  // The snapshot alone reproduces the run.
  REQUIRE(run("train --config " + p("run_a/config.txt") + " --out " + p("run_c")).code == 0);
  CHECK(read_file(p("run_c/metrics.csv")) == metrics);

  r = run("train --config " + cfg + " --override alpah=2 --out " + p("bad"));
  CHECK(r.code == 2);
  CHECK(r.err.find("alpah") != std::string::npos);
  CHECK(run("train --config " + p("missing.cfg")).code == 4);
  CHECK(run("train " + kTiny + " --out " + p("t"), "DIFFIL_THREADS=lots").code == 2);

  r = run("train " + kTiny + " --override learning_rate=1e300 --override bc_steps=0 --out " + p("boom"));
  CHECK(r.code == 3);
  CHECK(fs::exists(kWork / "boom" / "last_good.ckpt"));
}

TEST_CASE("eval") {
  REQUIRE(run("gen-expert --env point_mass --out " + p("e.jsonl")).code == 0);
  auto mean = [](const std::string& out) { return std::stod(out.substr(out.find(" mean ") + 6)); };
  Result nominal = run("eval --expert " + p("e.jsonl") + " --episodes 3");
  Result perturbed = run("eval --expert " + p("e.jsonl") + " --episodes 3 --perturb --seed 4 --csv " + p("e.csv"));
  REQUIRE(nominal.code == 0);
  REQUIRE(perturbed.code == 0);
  CHECK(mean(perturbed.out) <= mean(nominal.out));
  CHECK(count_lines(read_file(p("e.csv"))) == 2);

  REQUIRE(run("train " + kTiny + " --out " + p("run_e")).code == 0);
  const std::string ckpt = "eval --checkpoint " + p("run_e/final.ckpt") + " --episodes 1 --perturb --seed 3";
  Result a = run(ckpt), b = run(ckpt);
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);

  CHECK(run("eval --checkpoint " + p("nothing.ckpt")).code == 4);
  CHECK(run("eval --checkpoint " + p("run_e/final.ckpt") + " --env cloth").code == 2);
  CHECK(run("eval").code == 2);
}

TEST_CASE("ablate") {
  Result r = run("ablate --axis momentum --values 1,2");
  CHECK(r.code == 2);
  CHECK(r.err.find("alpha, loss, trunc") != std::string::npos);
  CHECK(run("ablate --axis trunc --values 0 --seeds 0").code == 2);

  r = run("ablate --axis alpha --values 0,1 --seeds 0,1 " + kTiny + " --out " + p("abl"));
  REQUIRE(r.code == 0);
  const std::string summary = read_file(p("abl/summary.csv"));
  CHECK(count_lines(summary) == 5);
  CHECK(summary.rfind("axis,value,seed,", 0) == 0);
  CHECK(fs::exists(kWork / "abl" / "alpha_0" / "seed_1" / "metrics.csv"));
  fs::remove_all(kWork);
}
