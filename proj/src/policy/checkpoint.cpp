// SPDX-License-Identifier: Apache-2.0
#include "diffil/policy/checkpoint.hpp"

#include "diffil/errors.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>

namespace diffil::policy {
namespace {

constexpr int kVersion = 1;

void write_le(std::ostream& out, double value) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(value);
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

double read_le(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw IoError("checkpoint: truncated tensor data");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params,
                     const CheckpointMeta& meta) {
  nlohmann::json header;
  header["format"] = "diffil-checkpoint";
  header["version"] = kVersion;
  header["env"] = meta.env;
  header["seed"] = meta.seed;
  header["config_hash"] = meta.config_hash;
  header["iteration"] = meta.iteration;
  const auto names = params.names();
  const auto shapes = params.shapes();
  header["tensors"] = nlohmann::json::array();
  for (std::size_t i = 0; i < names.size(); ++i) {
    header["tensors"].push_back({{"name", names[i]}, {"shape", shapes[i]}});
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << header.dump() << '\n';
  const Eigen::VectorXd flat = params.flatten();
  for (Eigen::Index i = 0; i < flat.size(); ++i) write_le(out, flat[i]);
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("checkpoint: missing header in " + path.string());

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint: malformed header in " + path.string() + ": " + e.what());
  }
  if (header.value("format", "") != "diffil-checkpoint" || header.value("version", 0) != kVersion) {
    throw IoError("checkpoint: unsupported format in " + path.string());
  }

  Checkpoint ckpt;
  try {
    ckpt.meta.env = header.at("env").get<std::string>();
    ckpt.meta.seed = header.at("seed").get<std::uint64_t>();
    ckpt.meta.config_hash = header.at("config_hash").get<std::string>();
    ckpt.meta.iteration = header.at("iteration").get<std::int64_t>();

    const auto& tensors = header.at("tensors");
    if (tensors.size() != 7) throw IoError("checkpoint: expected 7 tensors (3 layers + log_std)");
    PolicyParams& p = ckpt.params;
    for (std::size_t l = 0; l < 3; ++l) {
      const auto ws = tensors[2 * l].at("shape").get<std::vector<Eigen::Index>>();
      const auto bs = tensors[2 * l + 1].at("shape").get<std::vector<Eigen::Index>>();
      if (ws.size() != 2 || bs.size() != 1 || bs[0] != ws[0]) throw IoError("checkpoint: bad layer shapes");
      p.weights.emplace_back(ws[0], ws[1]);
      p.biases.emplace_back(bs[0]);
    }
    const auto ls = tensors[6].at("shape").get<std::vector<Eigen::Index>>();
    if (ls.size() != 1) throw IoError("checkpoint: bad log_std shape");
    p.log_std.resize(ls[0]);
    if (p.names() != std::vector<std::string>{tensors[0]["name"], tensors[1]["name"], tensors[2]["name"],
                                              tensors[3]["name"], tensors[4]["name"], tensors[5]["name"],
                                              tensors[6]["name"]}) {
      throw IoError("checkpoint: unexpected tensor names");
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint: malformed header in " + path.string() + ": " + e.what());
  }

  Eigen::VectorXd flat(ckpt.params.num_parameters());
  for (Eigen::Index i = 0; i < flat.size(); ++i) flat[i] = read_le(in);
  if (in.peek() != std::char_traits<char>::eof()) throw IoError("checkpoint: trailing bytes in " + path.string());
  ckpt.params.assign(flat);
  return ckpt;
}

}  // namespace diffil::policy
