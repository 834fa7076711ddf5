#include "splab/adam.hpp"

#include <cmath>

#include "splab/errors.hpp"

namespace splab {

void adam_step(AdamState& state, std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads) {
  const std::vector<double> rates(params.size(), state.config.learning_rate);
  adam_step(state, params, grads, rates);
}

void adam_step(AdamState& state, std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads, std::span<const double> learning_rates) {
  if (learning_rates.size() != params.size()) throw ShapeError("one learning rate per tensor expected");
  if (params.size() != grads.size()) throw ShapeError("parameter and gradient lists differ in length");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != grads[i].size()) throw ShapeError("gradient " + std::to_string(i) + " has wrong size");
    for (double g : grads[i]) {
      if (!std::isfinite(g)) throw NumericalError("non-finite gradient in tensor " + std::to_string(i));
    }
  }
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.push_back(Vector::Zero(static_cast<Eigen::Index>(p.size())));
      state.second_moment.push_back(Vector::Zero(static_cast<Eigen::Index>(p.size())));
    }
  }
  if (state.first_moment.size() != params.size()) throw ShapeError("optimizer state does not match parameters");

  const auto& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto n = static_cast<Eigen::Index>(params[i].size());
    if (state.first_moment[i].size() != n) throw ShapeError("optimizer state does not match parameters");
    Eigen::Map<Eigen::ArrayXd> p(params[i].data(), n);
    Eigen::Map<const Eigen::ArrayXd> g(grads[i].data(), n);
    auto m = state.first_moment[i].array();
    auto v = state.second_moment[i].array();
    const double step_size = learning_rates[i] / correction1;
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.square();
    p -= step_size * m / ((v / correction2).sqrt() + c.epsilon);
  }
}

void adam_step(AdamState& state, Network& net, const Gradients& grads) {
  auto params = net.parameters();
  const auto g = grads.views();
  const double gate_rate =
      state.config.gate_learning_rate > 0.0 ? state.config.gate_learning_rate : state.config.learning_rate;
  std::vector<double> rates;
  rates.reserve(params.size());
  for (const auto& layer : net.layers()) {
    rates.push_back(state.config.learning_rate);
    rates.push_back(state.config.learning_rate);
    if (layer.log_alpha) rates.push_back(gate_rate);
  }
  adam_step(state, params, g, rates);
}

}  // namespace splab
