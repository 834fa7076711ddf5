#pragma once

#include <cstddef>

#include "splab/network.hpp"
#include "splab/tensor.hpp"

namespace splab {

// Thin SVD: a = u * diag(s) * v^T with u [m x k], v [n x k], k = min(m, n).
struct SvdResult {
  Matrix u;
  Vector s;  // non-negative, descending
  Matrix v;

  Matrix reconstruct() const { return u * s.asDiagonal() * v.transpose(); }
};

struct SvdOptions {
  double tol = 1e-12;   // relative column-coupling threshold
  int max_sweeps = 60;
};

// One-sided (Hestenes) Jacobi. Sign convention: the first non-negligible
// entry of every u column is non-negative. Columns for zero singular values
// are completed to an orthonormal set. Throws NumericalError when the sweep
// cap is hit.
SvdResult svd(const Matrix& a, SvdOptions options = {});

// Keeps the r leading singular triplets; 1 <= r <= min(m, n).
FactoredWeight truncate(const SvdResult& full, int r);

// U_r, V_r and the r singular values.
std::size_t factored_param_count(std::size_t m, std::size_t n, std::size_t r);

// Replaces each weight by its rank-min(r, m, n) factorization when that
// stores fewer numbers than m*n; other layers stay dense. Gated networks are
// folded with the deterministic gate first, so the result carries no gates.
Network decompose_network(const Network& net, int r);

// Dense copy with gates folded in (w * z_hat) and factors multiplied out.
Network fold_network(const Network& net);

}  // namespace splab
