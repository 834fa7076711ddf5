#include "splab/random.hpp"

#include <numeric>

#include "splab/errors.hpp"

namespace splab {

double Rng::open_uniform() {
  double u = 0.0;
  do {
    u = unit_(engine_);
  } while (u <= 0.0 || u >= 1.0);
  return u;
}

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw InvalidArgument("cannot draw an index from an empty range");
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
}

void Rng::fill_open_uniform(std::span<double> out) {
  // 53 random bits mapped to the centre of their bucket: never 0, never 1.
  for (double& u : out) u = (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

std::size_t Rng::categorical(std::span<const double> weights) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total > 0.0)) throw InvalidArgument("categorical weights must have a positive sum");
  double target = uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    target -= weights[i];
    if (target < 0.0) return i;
  }
  return weights.size() - 1;
}

}  // namespace splab
