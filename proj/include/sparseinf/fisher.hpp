// SPDX-License-Identifier: Apache-2.0
//
// Layer-wise information matrix estimators: exact block, Diag, KFAC, EFB and
// the diagonal correction that makes the parameter-space diagonal exact.

#ifndef SPARSEINF_FISHER_HPP
#define SPARSEINF_FISHER_HPP

#include "sparseinf/kronlin.hpp"
#include "sparseinf/net.hpp"

#include <cstddef>

namespace sparseinf {

constexpr std::size_t kDefaultExactBlockCap = 4096;

struct ExactBlockIM {
  Matrix matrix;  // N x N, N = n * m
  std::size_t count = 0;
};

struct KronFactors {
  Matrix A;  // n x n, mean of a a^T
  Matrix G;  // m x m, mean of g g^T
};

/// Eigenbasis of one layer's information matrix. `lambda` is indexed like the
/// columns of U_A (x) U_G, i.e. lambda[m(beta - 1) + zeta - 1].
struct KronEigenbasis {
  Matrix U_A;
  Matrix U_G;
  Vector s_A;  // eigenvalues of A, non-increasing
  Vector s_G;  // eigenvalues of G, non-increasing
  Vector lambda;
  Vector exact_diag;
  Vector D;
  std::size_t count = 0;

  std::size_t n() const noexcept { return static_cast<std::size_t>(U_A.rows()); }
  std::size_t m() const noexcept { return static_cast<std::size_t>(U_G.rows()); }
  std::size_t size() const noexcept { return n() * m(); }
};

/// (1/T) sum_t vec(g_t a_t^T) vec(g_t a_t^T)^T. Refuses N above `cap`.
ExactBlockIM exact_block_im(const LayerFactorBatch& batch, std::size_t cap = kDefaultExactBlockCap);

KronFactors kfac(const LayerFactorBatch& batch);

/// Mean of squared per-sample gradients.
Vector diag_fisher(const LayerFactorBatch& batch);

struct EfbSpectrum {
  Matrix U_A;
  Matrix U_G;
  Vector s_A;
  Vector s_G;
  Vector lambda;
};

/// Eigenvalue correction in the Kronecker-factored eigenbasis:
/// lambda_i = mean_t [((U_A (x) U_G)^T vec(g_t a_t^T))_i]^2.
EfbSpectrum efb(const KronFactors& kron, const LayerFactorBatch& batch);

/// diag((U_left (x) U_right) diag(lambda) (U_left (x) U_right)^T) without
/// forming the Kronecker product. Works for the full basis and for column
/// subsets (lambda then has length cols(U_left) * cols(U_right)).
Vector efb_diagonal(const Matrix& u_left, const Matrix& u_right, const Vector& lambda);

/// exact_diag - efb_diag. Entries may be negative.
Vector diagonal_correction(const Vector& exact_diag, const Vector& efb_diag);

/// Full pipeline for one layer: KFAC factors, eigenbasis, corrected
/// eigenvalues, exact diagonal and D.
KronEigenbasis build_eigenbasis(const LayerFactorBatch& batch);

/// Fold-style accumulator for the first pass (A, G and the exact diagonal).
/// Sample chunks may be accumulated separately and merged.
class KfacAccumulator {
 public:
  KfacAccumulator(std::size_t n, std::size_t m);
  void add(const LayerFactorBatch& batch);
  void merge(const KfacAccumulator& other);
  std::size_t count() const noexcept { return count_; }
  KronFactors factors() const;
  Vector exact_diag() const;

 private:
  Matrix a_sum_;
  Matrix g_sum_;
  Matrix sq_sum_;  // m x n, sum of (g a^T)^2 elementwise
  std::size_t count_ = 0;
};

/// Second-pass accumulator of squared rotated gradients for a fixed basis.
class EigenvalueAccumulator {
 public:
  EigenvalueAccumulator(Matrix u_a, Matrix u_g);
  void add(const LayerFactorBatch& batch);
  void merge(const EigenvalueAccumulator& other);
  std::size_t count() const noexcept { return count_; }
  Vector lambda() const;

 private:
  Matrix u_a_;
  Matrix u_g_;
  Vector sum_;
  std::size_t count_ = 0;
};

// Dense materializations used by oracles, verification and small diagnostics.
Matrix materialize_kfac(const KronFactors& k);
Matrix materialize_efb(const Matrix& u_left, const Matrix& u_right, const Vector& lambda);

}  // namespace sparseinf

#endif  // SPARSEINF_FISHER_HPP
