#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "splab/network.hpp"
#include "splab/random.hpp"
#include "splab/tensor.hpp"

namespace splab {

// Hard-concrete gate parameters for one group of weights.
struct GateParams {
  Eigen::ArrayXd log_alpha;
  GateConfig config{};
  double lambda_c = 0.0;

  void validate() const;
};

// z = min(1, max(0, sigmoid((logit(u) + log_alpha) / beta) * (zeta - gamma) + gamma)).
// Throws DomainError when any u is outside the open interval (0, 1).
Eigen::ArrayXd sample_gate(const GateParams& gp, const Eigen::ArrayXd& u);

// z_hat = min(1, max(0, sigmoid(log_alpha) * (zeta - gamma) + gamma)).
Eigen::ArrayXd deterministic_gate(const GateParams& gp);

// Expected number of non-zero gates:
//   L_sp = sum_j sigmoid(log_alpha_j - beta * log(-gamma / zeta)).
double sparsity_penalty(const GateParams& gp);
Eigen::ArrayXd sparsity_penalty_grad(const GateParams& gp);

// Elementwise w * z; z must have as many entries as w.
Matrix apply_gate(const Matrix& w, const Matrix& z);
Matrix apply_gate(const Matrix& w, const Eigen::ArrayXd& z);

double l1_penalty(std::span<const double> weights);
double l2_penalty(std::span<const double> weights);

// Gate values for a whole weight-shaped location matrix. When `slope` is
// given it receives dz/dlog_alpha (zero wherever the clamp is active).
Matrix gate_values(const Matrix& log_alpha, const GateConfig& config, GateMode mode, Rng* rng,
                   Matrix* slope = nullptr);

enum class Regularizer { none, l0, l1, l2 };

std::string to_string(Regularizer r);
Regularizer regularizer_from_string(const std::string& name);

// Penalty summed over every weight matrix of the network (biases excluded).
// l0 reads the gate locations; l1/l2 read the raw weights.
double network_penalty(const Network& net, Regularizer reg);

// grads += scale * d penalty / d params.
void add_penalty_gradient(const Network& net, Regularizer reg, double scale, Gradients& grads);

struct SparsityReport {
  std::size_t total_gated_weights = 0;
  std::size_t zero_count = 0;
  double percent = 0.0;
};

// Counts zero entries of the effective weight matrices. With threshold == 0
// only exact zeros count; otherwise |w| < threshold. Gated networks draw
// their gates with `mode` (sampled requires rng).
SparsityReport measure_sparsity(const Network& net, GateMode mode, Rng* rng, double threshold = 0.0);

// Threshold applied to ungated (L1/L2-trained) weights.
inline constexpr double kDenseZeroThreshold = 1e-6;

// Sampled gates for gated nets, |w| < 1e-6 for plain nets.
SparsityReport policy_sparsity(const Network& net, Rng& rng);

}  // namespace splab
