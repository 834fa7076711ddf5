#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "splab/network.hpp"
#include "splab/tensor.hpp"

namespace splab {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double gate_learning_rate = 0.0;  // log-alpha tensors; 0 means learning_rate
};

// Moment accumulators mirror the parameter list they are first stepped with.
struct AdamState {
  AdamConfig config{};
  std::vector<Vector> first_moment;
  std::vector<Vector> second_moment;
  std::uint64_t step = 0;

  AdamState() = default;
  explicit AdamState(AdamConfig cfg) : config(cfg) {}
};

// One bias-corrected Adam update. Rejects non-finite gradients with
// NumericalError before touching anything.
void adam_step(AdamState& state, std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads);

// Same, with a per-tensor learning rate (overrides the configured one).
void adam_step(AdamState& state, std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads, std::span<const double> learning_rates);

void adam_step(AdamState& state, Network& net, const Gradients& grads);

}  // namespace splab
