#include "splab/gates.hpp"

#include <cmath>

#include "splab/errors.hpp"

namespace splab {

namespace {

Eigen::ArrayXd sigmoid(const Eigen::ArrayXd& x) { return 1.0 / (1.0 + (-x).exp()); }

void check_noise(const Eigen::ArrayXd& u) {
  if (!((u > 0.0).all() && (u < 1.0).all())) {
    throw DomainError("gate noise must lie strictly inside (0, 1)");
  }
}

}  // namespace

void GateParams::validate() const {
  config.validate();
  if (!log_alpha.allFinite()) throw InvalidArgument("gate locations must be finite");
  if (lambda_c < 0.0) throw InvalidArgument("sparsification coefficient must be non-negative");
}

Eigen::ArrayXd sample_gate(const GateParams& gp, const Eigen::ArrayXd& u) {
  gp.config.validate();
  if (u.size() != gp.log_alpha.size()) throw ShapeError("noise length does not match gate count");
  check_noise(u);
  const auto& c = gp.config;
  const Eigen::ArrayXd logit = u.log() - (1.0 - u).log();
  const Eigen::ArrayXd stretched = sigmoid((logit + gp.log_alpha) / c.beta) * (c.zeta - c.gamma) + c.gamma;
  return stretched.max(0.0).min(1.0);
}

Eigen::ArrayXd deterministic_gate(const GateParams& gp) {
  gp.config.validate();
  const auto& c = gp.config;
  const Eigen::ArrayXd stretched = sigmoid(gp.log_alpha) * (c.zeta - c.gamma) + c.gamma;
  return stretched.max(0.0).min(1.0);
}

double sparsity_penalty(const GateParams& gp) {
  gp.config.validate();
  const auto& c = gp.config;
  const double shift = c.beta * std::log(-c.gamma / c.zeta);
  return sigmoid(gp.log_alpha - shift).sum();
}

Eigen::ArrayXd sparsity_penalty_grad(const GateParams& gp) {
  const auto& c = gp.config;
  const double shift = c.beta * std::log(-c.gamma / c.zeta);
  const Eigen::ArrayXd s = sigmoid(gp.log_alpha - shift);
  return s * (1.0 - s);
}

Matrix apply_gate(const Matrix& w, const Matrix& z) {
  if (w.size() != z.size()) throw ShapeError("gate count does not match weight count");
  Matrix out = w;
  out.array() *= z.reshaped<Eigen::RowMajor>(w.rows(), w.cols()).array();
  return out;
}

Matrix apply_gate(const Matrix& w, const Eigen::ArrayXd& z) {
  if (w.size() != z.size()) throw ShapeError("gate count does not match weight count");
  Matrix out = w;
  Eigen::Map<Eigen::ArrayXd>(out.data(), out.size()) *= z;
  return out;
}

double l1_penalty(std::span<const double> weights) {
  double s = 0.0;
  for (double w : weights) s += std::abs(w);
  return s;
}

double l2_penalty(std::span<const double> weights) {
  double s = 0.0;
  for (double w : weights) s += w * w;
  return s;
}

Matrix gate_values(const Matrix& log_alpha, const GateConfig& c, GateMode mode, Rng* rng, Matrix* slope) {
  const auto n = log_alpha.size();
  Eigen::Map<const Eigen::ArrayXd> loc(log_alpha.data(), n);
  Matrix z(log_alpha.rows(), log_alpha.cols());
  Eigen::Map<Eigen::ArrayXd> zmap(z.data(), n);
  const double span = c.zeta - c.gamma;

  Eigen::ArrayXd sig;
  double inv_temp = 1.0;
  if (mode == GateMode::sampled) {
    if (rng == nullptr) throw InvalidArgument("sampled gates need a random stream");
    Eigen::ArrayXd u(n);
    rng->fill_open_uniform(std::span<double>(u.data(), static_cast<std::size_t>(n)));
    inv_temp = 1.0 / c.beta;
    const Eigen::ArrayXd t = ((u / (1.0 - u)).log() + loc) * inv_temp;
    sig = 1.0 / (1.0 + (-t).exp());
  } else {
    sig = 1.0 / (1.0 + (-loc).exp());
  }
  const Eigen::ArrayXd stretched = sig * span + c.gamma;
  zmap = stretched.max(0.0).min(1.0);

  if (slope != nullptr) {
    slope->resize(log_alpha.rows(), log_alpha.cols());
    Eigen::Map<Eigen::ArrayXd> smap(slope->data(), n);
    const Eigen::ArrayXd open = ((stretched > 0.0) && (stretched < 1.0)).cast<double>();
    smap = sig * (1.0 - sig) * (span * inv_temp) * open;
  }
  return z;
}

std::string to_string(Regularizer r) {
  switch (r) {
    case Regularizer::none:
      return "none";
    case Regularizer::l0:
      return "l0";
    case Regularizer::l1:
      return "l1";
    case Regularizer::l2:
      return "l2";
  }
  return "none";
}

Regularizer regularizer_from_string(const std::string& name) {
  if (name == "none") return Regularizer::none;
  if (name == "l0") return Regularizer::l0;
  if (name == "l1") return Regularizer::l1;
  if (name == "l2") return Regularizer::l2;
  throw ConfigError("unknown sparsity mode '" + name + "'");
}

namespace {

double layer_l0(const Layer& l, const GateConfig& c) {
  const double shift = c.beta * std::log(-c.gamma / c.zeta);
  Eigen::Map<const Eigen::ArrayXd> loc(l.log_alpha->data(), l.log_alpha->size());
  return (1.0 / (1.0 + (-(loc - shift)).exp())).sum();
}

}  // namespace

double network_penalty(const Network& net, Regularizer reg) {
  double total = 0.0;
  for (const auto& l : net.layers()) {
    switch (reg) {
      case Regularizer::none:
        break;
      case Regularizer::l0:
        if (!l.gated()) throw InvalidArgument("l0 penalty needs a gated network");
        total += layer_l0(l, net.gate_config());
        break;
      case Regularizer::l1:
        total += l.weight.cwiseAbs().sum();
        break;
      case Regularizer::l2:
        total += l.weight.squaredNorm();
        break;
    }
  }
  return total;
}

void add_penalty_gradient(const Network& net, Regularizer reg, double scale, Gradients& grads) {
  if (reg == Regularizer::none || scale == 0.0) return;
  if (grads.layers.size() != net.depth()) throw ShapeError("gradient structure does not match network");
  const auto& c = net.gate_config();
  const double shift = c.beta * std::log(-c.gamma / c.zeta);
  for (std::size_t i = 0; i < net.depth(); ++i) {
    const Layer& l = net.layer(i);
    LayerGrad& g = grads.layers[i];
    switch (reg) {
      case Regularizer::none:
        break;
      case Regularizer::l0: {
        if (!l.gated()) throw InvalidArgument("l0 penalty needs a gated network");
        const Eigen::ArrayXXd s = 1.0 / (1.0 + (-(l.log_alpha->array() - shift)).exp());
        g.log_alpha.array() += scale * s * (1.0 - s);
        break;
      }
      case Regularizer::l1:
        g.weight.array() += scale * l.weight.array().sign();
        break;
      case Regularizer::l2:
        g.weight.array() += (2.0 * scale) * l.weight.array();
        break;
    }
  }
}

namespace {

std::size_t count_zeros(const Matrix& m, double threshold) {
  if (threshold <= 0.0) return static_cast<std::size_t>((m.array() == 0.0).count());
  return static_cast<std::size_t>((m.array().abs() < threshold).count());
}

}  // namespace

SparsityReport measure_sparsity(const Network& net, GateMode mode, Rng* rng, double threshold) {
  SparsityReport r;
  for (const auto& l : net.layers()) {
    if (l.is_factored()) {
      const Matrix w = l.factored->reconstruct();
      r.total_gated_weights += static_cast<std::size_t>(w.size());
      r.zero_count += count_zeros(w, threshold);
    } else if (l.gated()) {
      const Matrix z = gate_values(*l.log_alpha, net.gate_config(), mode, rng);
      r.total_gated_weights += static_cast<std::size_t>(l.weight.size());
      r.zero_count += count_zeros(l.weight.cwiseProduct(z), threshold);
    } else {
      r.total_gated_weights += static_cast<std::size_t>(l.weight.size());
      r.zero_count += count_zeros(l.weight, threshold);
    }
  }
  r.percent = r.total_gated_weights == 0
                  ? 0.0
                  : 100.0 * static_cast<double>(r.zero_count) / static_cast<double>(r.total_gated_weights);
  return r;
}

SparsityReport policy_sparsity(const Network& net, Rng& rng) {
  if (net.gated()) return measure_sparsity(net, GateMode::sampled, &rng, 0.0);
  return measure_sparsity(net, GateMode::deterministic, nullptr, kDenseZeroThreshold);
}

}  // namespace splab
