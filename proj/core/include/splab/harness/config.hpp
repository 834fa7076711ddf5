#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "splab/algos/common.hpp"

namespace splab {

enum class ScoreMode {
  raw,         // r + S_p
  normalized,  // reward rescaled to [0, 100] against the target, then + S_p
};

std::string to_string(ScoreMode m);
ScoreMode score_mode_from_string(const std::string& name);

// Everything a sweep needs. `algo.lambda_c` and `algo.seed` are overridden
// per run.
struct ExperimentConfig {
  AlgoConfig algo;
  std::vector<double> coefficients{1e-5, 5e-5, 1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2, 1e-1, 5e-1};
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path out_dir = "runs";
  int workers = 1;
  ScoreMode score_mode = ScoreMode::raw;

  // Throws ConfigError.
  void validate() const;
};

// Parses `key = value` lines; `#` starts a comment. Unknown keys, malformed
// numbers and duplicate keys raise ConfigError naming the line.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Applies one key to a config; the same keys as the file format.
void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value);

// Every key understood by apply_setting, sorted.
std::vector<std::string> config_keys();

// Canonical `key = value` text for the algorithm settings (round-trips
// through parse_config).
std::string describe(const AlgoConfig& cfg);

}  // namespace splab
