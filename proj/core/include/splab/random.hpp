#pragma once

#include <cstdint>
#include <random>
#include <span>

#include "splab/tensor.hpp"

namespace splab {

// Seeded random stream. One per training run / evaluation; never shared
// across threads.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  // U[0,1)
  double uniform() { return unit_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Strictly inside (0,1); gate noise needs finite logits.
  double open_uniform();
  double normal() { return normal_(engine_); }
  std::size_t index(std::size_t n);
  std::uint64_t next_u64() { return engine_(); }

  // Fills `out` with open-interval uniforms.
  void fill_open_uniform(std::span<double> out);

  // Samples an index from unnormalized non-negative weights.
  std::size_t categorical(std::span<const double> weights);

  // Derives an independent child stream (e.g. for evaluation episodes).
  Rng split() { return Rng(engine_() ^ 0x9E3779B97F4A7C15ULL); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace splab
