// SPDX-License-Identifier: Apache-2.0
//
// Spectral sparsification of a Kronecker-factored eigenbasis that keeps the
// eigenvectors in Kronecker form, plus assembly of the low-rank information
// form with the diagonal correction recomputed after truncation.

#ifndef SPARSEINF_SPARSE_HPP
#define SPARSEINF_SPARSE_HPP

#include "sparseinf/fisher.hpp"
#include "sparseinf/kronlin.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace sparseinf {

/// Output of spectral_sparsify. kept_A / kept_G are 1-based, ascending.
/// lambda_L[g(p-1) + q] = lambda[m(kept_A[p] - 1) + kept_G[q]] (1-based p, q),
/// which is the column order of U_a (x) U_g.
struct SparsifiedSpectrum {
  Matrix U_a;
  Matrix U_g;
  Vector lambda_L;
  std::vector<std::size_t> kept_A;
  std::vector<std::size_t> kept_G;
  std::size_t K_requested = 0;

  std::size_t L() const noexcept { return kept_A.size() * kept_G.size(); }
};

/// Low-rank information form (U_a (x) U_g) diag(lambda_L) (U_a (x) U_g)^T + diag(D).
struct SparseInfoForm {
  Matrix U_a;
  Matrix U_g;
  Vector lambda_L;
  Vector D;
  Vector exact_diag;
  std::vector<std::size_t> kept_A;
  std::vector<std::size_t> kept_G;
  std::size_t K_requested = 0;
  /// 0-based positions of lambda_L that take part in sampling. Zero
  /// eigenvalues removed by check_validity are left out here.
  std::vector<std::size_t> active;

  std::size_t n() const noexcept { return static_cast<std::size_t>(U_a.rows()); }
  std::size_t m() const noexcept { return static_cast<std::size_t>(U_g.rows()); }
  std::size_t size() const noexcept { return n() * m(); }
  std::size_t L() const noexcept { return static_cast<std::size_t>(lambda_L.size()); }
};

/// 0-based indices of the K largest entries, ties broken by smaller index.
std::vector<std::size_t> top_k_indices(const Vector& values, std::size_t K);

/// Keeps the top-K eigenvalues and every eigenvalue needed to keep the
/// eigenvectors a Kronecker product of column subsets of U_A and U_G.
SparsifiedSpectrum spectral_sparsify(const Matrix& U_A, const Matrix& U_G, const Vector& lambda, std::size_t K);

/// D_i = exact_diag_i - [(U_a (x) U_g) lambda_L (U_a (x) U_g)^T]_ii.
SparseInfoForm assemble_inf(const SparsifiedSpectrum& spectrum, const Vector& exact_diag);

/// spectral_sparsify + assemble_inf on one layer's eigenbasis.
SparseInfoForm sparsify_layer(const KronEigenbasis& basis, std::size_t K);

enum class Verdict { valid, repaired, degenerate };

std::string to_string(Verdict v);

struct ValidityReport {
  Verdict verdict = Verdict::valid;
  SparseInfoForm form;  // unchanged when valid, repaired otherwise
  std::size_t clipped_d = 0;
  std::size_t dropped_eigenvalues = 0;
  std::size_t zero_diagonal = 0;
};

/// Sufficient condition for a non-degenerate covariance: every D_i > 0 and
/// no zero entry in lambda_L. Repair clips D to `eps` and removes zero
/// eigenvalues from the active set. An exact diagonal with zeros (dead
/// units) makes the verdict degenerate regardless of repair.
ValidityReport check_validity(const SparseInfoForm& form, double eps = 1e-8);

/// Dense N x N matrix of the form. Diagnostics and test oracles only.
Matrix materialize_inf(const SparseInfoForm& form);

/// Dense (U_a (x) U_g) diag(lambda_L) (U_a (x) U_g)^T without D.
Matrix materialize_low_rank(const SparseInfoForm& form);

}  // namespace sparseinf

#endif  // SPARSEINF_SPARSE_HPP
