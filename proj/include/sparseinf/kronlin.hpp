// SPDX-License-Identifier: Apache-2.0
//
// Dense linear algebra helpers that know about Kronecker structure.
//
// Parameter vectors follow the column-stacking convention theta = vec(W) for a
// weight matrix W of shape (m x n), so a Kronecker product U_A (x) U_G has row
// index i = m(alpha - 1) + gamma with alpha indexing the A side (1..n) and
// gamma the G side (1..m). Indices in the public index helpers are 1-based.

#ifndef SPARSEINF_KRONLIN_HPP
#define SPARSEINF_KRONLIN_HPP

#include <Eigen/Dense>

#include <cstddef>
#include <utility>

namespace sparseinf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Eigendecomposition of a symmetric matrix, values in non-increasing order.
struct EigPair {
  Matrix vectors;  // columns are unit eigenvectors
  Vector values;
};

/// Symmetric eigendecomposition. Ties keep their original (ascending-solver)
/// order reversed stably, so the result is deterministic. Throws
/// ConvergenceFailure when the solver does not converge or the
/// multiply-back residual exceeds 1e-8 relative Frobenius.
EigPair sym_eig(const Matrix& m);

/// Same as sym_eig but clamps eigenvalues in [-1e-10 * scale, 0) to zero.
/// Values below that band indicate an indefinite input and are kept as-is.
EigPair sym_eig_psd(const Matrix& m);

/// Lower-triangular L with L L^T = m. Throws PositiveDefinitenessViolation
/// carrying the 1-based index of the first non-positive pivot.
Matrix cholesky(const Matrix& m);

/// True when |m - m^T| <= tol * max(1, max|m|) elementwise.
bool is_symmetric(const Matrix& m, double tol = 0.0);

/// Row/column index arithmetic for U_A (x) U_G with U_A n x n and U_G m x m.
struct KronIndex {
  std::size_t n;  // A-side dimension
  std::size_t m;  // G-side dimension

  std::size_t size() const noexcept { return n * m; }
  /// i = m(alpha - 1) + gamma, all 1-based.
  std::size_t row(std::size_t alpha, std::size_t gamma) const;
  /// Inverse of row(): (beta, zeta) with i = m(beta - 1) + zeta.
  std::pair<std::size_t, std::size_t> split(std::size_t i) const;
};

std::size_t kron_row_index(std::size_t alpha, std::size_t gamma, std::size_t m);

/// beta = floor((i - 1) / m) + 1, zeta = i - m(beta - 1).
std::pair<std::size_t, std::size_t> kron_row_inverse(std::size_t i, std::size_t m);

/// Applies (U_left (x) U_right) or its transpose to x without forming the
/// Kronecker product, using (P (x) Q) vec(X) = vec(Q X P^T).
///
/// U_left is n x a and U_right is m x g. Without transpose x has length a*g
/// and the result n*m; with transpose x has length n*m and the result a*g.
Vector kron_apply(const Matrix& u_left, const Matrix& u_right, const Eigen::Ref<const Vector>& x,
                  bool transpose);

/// Explicit Kronecker product. Test oracles and desk-scale diagnostics only.
Matrix kron_materialize(const Matrix& left, const Matrix& right);

/// Relative Frobenius distance |a - b|_F / max(|b|_F, tiny).
double rel_frobenius(const Matrix& a, const Matrix& b);

}  // namespace sparseinf

#endif  // SPARSEINF_KRONLIN_HPP
