#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "splab/algos/common.hpp"
#include "splab/network.hpp"
#include "splab/replay.hpp"

namespace splab {

// Layout: "SPLC", u16 version, u32 header length, JSON header, then
// little-endian f64 blobs in layer order:
//   dense:    W, b
//   gated:    W, b, log_alpha
//   factored: U, S, V, b
// Matrices are stored row-major.
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string env;
  Algo algo = Algo::dqn;
  Regularizer sparsity = Regularizer::none;
  double lambda_c = 0.0;
  std::uint64_t seed = 0;
  int episodes = 0;  // training episodes (PPO: iterations) actually run
  Network network;

  // "dense", "gated" or "factored" (any factored layer makes it factored).
  std::string kind() const;
  bool identical_to(const Checkpoint& other) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
// Throws UnsupportedFormat on bad magic/version and FormatError naming the
// section and byte offset on truncated or inconsistent input.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Demo buffers share the container: header {content: "demos", ...}, then
// queries and actions.
std::vector<std::uint8_t> encode_demos(const DemoBuffer& demos);
DemoBuffer decode_demos(std::span<const std::uint8_t> bytes);
void save_demos(const std::filesystem::path& path, const DemoBuffer& demos);
DemoBuffer load_demos(const std::filesystem::path& path);

// Whole-file helpers; IoError on failure. Writes go through a temporary file.
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace splab
