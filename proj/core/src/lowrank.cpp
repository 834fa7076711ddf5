#include "splab/lowrank.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "splab/errors.hpp"
#include "splab/gates.hpp"

namespace splab {

namespace {

// Hestenes rotations on the columns of `w` (m >= n), accumulating into `v`.
// Returns the number of sweeps used.
int jacobi_orthogonalize(Matrix& w, Matrix& v, const SvdOptions& opt) {
  const Eigen::Index n = w.cols();
  // Columns below this squared norm are numerically zero; rotating them
  // against each other never settles.
  const double negligible = std::pow(std::numeric_limits<double>::epsilon() * w.norm(), 2);
  for (int sweep = 1; sweep <= opt.max_sweeps; ++sweep) {
    bool rotated = false;
    for (Eigen::Index p = 0; p + 1 < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double alpha = w.col(p).squaredNorm();
        const double beta = w.col(q).squaredNorm();
        const double gamma = w.col(p).dot(w.col(q));
        if (gamma == 0.0 || std::abs(gamma) <= opt.tol * std::sqrt(alpha * beta)) continue;
        if (std::min(alpha, beta) <= negligible) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (Eigen::Index i = 0; i < w.rows(); ++i) {
          const double wp = w(i, p);
          const double wq = w(i, q);
          w(i, p) = c * wp - s * wq;
          w(i, q) = s * wp + c * wq;
        }
        for (Eigen::Index i = 0; i < v.rows(); ++i) {
          const double vp = v(i, p);
          const double vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    if (!rotated) return sweep;
  }
  return -1;
}

// Replaces column j of `u` with a unit vector orthogonal to columns [0, j).
void complete_column(Matrix& u, Eigen::Index j) {
  const Eigen::Index m = u.rows();
  Eigen::VectorXd best;
  double best_norm = -1.0;
  for (Eigen::Index e = 0; e < m; ++e) {
    Eigen::VectorXd cand = Eigen::VectorXd::Unit(m, e);
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index k = 0; k < j; ++k) cand -= u.col(k).dot(cand) * u.col(k);
    }
    const double nrm = cand.norm();
    if (nrm > best_norm) {
      best_norm = nrm;
      best = cand;
    }
    if (best_norm > 0.5) break;
  }
  u.col(j) = best / best_norm;
}

SvdResult svd_tall(const Matrix& a, const SvdOptions& opt) {
  const Eigen::Index m = a.rows();
  const Eigen::Index n = a.cols();
  Matrix w = a;
  Matrix v = Matrix::Identity(n, n);
  const int sweeps = jacobi_orthogonalize(w, v, opt);
  if (sweeps < 0) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += std::pow(w.col(p).dot(w.col(q)), 2);
    throw NumericalError("SVD did not converge in " + std::to_string(opt.max_sweeps) +
                         " sweeps; off-diagonal residual " + std::to_string(std::sqrt(off)));
  }

  Vector sigma(n);
  for (Eigen::Index j = 0; j < n; ++j) sigma(j) = w.col(j).norm();

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return sigma(x) > sigma(y); });

  SvdResult r;
  r.u.resize(m, n);
  r.v.resize(n, n);
  r.s.resize(n);
  const double smax = n > 0 ? sigma(order[0]) : 0.0;
  const double negligible = std::max(smax, 1.0) * 1e-14 * static_cast<double>(std::max(m, n));
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto src = order[static_cast<std::size_t>(j)];
    r.s(j) = sigma(src);
    r.v.col(j) = v.col(src);
    if (sigma(src) > negligible) {
      r.u.col(j) = w.col(src) / sigma(src);
    } else {
      r.s(j) = 0.0;
      complete_column(r.u, j);
    }
  }

  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < m; ++i) {
      if (std::abs(r.u(i, j)) > 1e-12) {
        if (r.u(i, j) < 0.0) {
          r.u.col(j) *= -1.0;
          r.v.col(j) *= -1.0;
        }
        break;
      }
    }
  }
  return r;
}

}  // namespace

SvdResult svd(const Matrix& a, SvdOptions options) {
  if (!a.allFinite()) throw InvalidArgument("SVD input has non-finite entries");
  if (a.rows() == 0 || a.cols() == 0) throw InvalidArgument("SVD input is empty");
  if (a.rows() >= a.cols()) return svd_tall(a, options);

  // a^T = v s u^T; swap roles and re-apply the sign convention on u.
  SvdResult t = svd_tall(a.transpose(), options);
  SvdResult r{std::move(t.v), std::move(t.s), std::move(t.u)};
  for (Eigen::Index j = 0; j < r.u.cols(); ++j) {
    for (Eigen::Index i = 0; i < r.u.rows(); ++i) {
      if (std::abs(r.u(i, j)) > 1e-12) {
        if (r.u(i, j) < 0.0) {
          r.u.col(j) *= -1.0;
          r.v.col(j) *= -1.0;
        }
        break;
      }
    }
  }
  return r;
}

FactoredWeight truncate(const SvdResult& full, int r) {
  const int k = static_cast<int>(full.s.size());
  if (r < 1 || r > k) {
    throw InvalidArgument("rank " + std::to_string(r) + " outside [1, " + std::to_string(k) + "]");
  }
  return FactoredWeight{full.u.leftCols(r), full.s.head(r), full.v.leftCols(r)};
}

std::size_t factored_param_count(std::size_t m, std::size_t n, std::size_t r) { return r * (m + n + 1); }

Network fold_network(const Network& net) {
  std::vector<Layer> layers;
  layers.reserve(net.depth());
  for (const auto& l : net.layers()) {
    Layer d;
    d.bias = l.bias;
    d.activation = l.activation;
    if (l.is_factored()) {
      d.weight = l.factored->reconstruct();
    } else if (l.gated()) {
      d.weight = l.weight.cwiseProduct(gate_values(*l.log_alpha, net.gate_config(), GateMode::deterministic, nullptr));
    } else {
      d.weight = l.weight;
    }
    layers.push_back(std::move(d));
  }
  return Network(std::move(layers));
}

Network decompose_network(const Network& net, int r) {
  if (net.depth() == 0) throw InvalidArgument("cannot decompose an empty network");
  if (r < 1) throw InvalidArgument("rank must be >= 1");
  Network dense = fold_network(net);
  std::vector<Layer> layers;
  layers.reserve(dense.depth());
  for (const auto& l : dense.layers()) {
    const auto m = static_cast<std::size_t>(l.weight.rows());
    const auto n = static_cast<std::size_t>(l.weight.cols());
    const int rank = std::min<int>(r, static_cast<int>(std::min(m, n)));
    Layer out;
    out.bias = l.bias;
    out.activation = l.activation;
    if (factored_param_count(m, n, static_cast<std::size_t>(rank)) < m * n) {
      out.factored = truncate(svd(l.weight), rank);
    } else {
      out.weight = l.weight;
    }
    layers.push_back(std::move(out));
  }
  return Network(std::move(layers));
}

}  // namespace splab
