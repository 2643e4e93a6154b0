// SPDX-License-Identifier: Apache-2.0
#include "sparseinf/errors.hpp"
#include "sparseinf/sparse.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

using namespace sparseinf;
using namespace sparseinf::testing;

namespace {

// Brute force: decompose every top-K index by scanning all (beta, zeta) pairs
// with the forward index map.
struct Oracle {
  std::vector<std::size_t> kept_A, kept_G;
};

Oracle brute_force(const Vector& lambda, std::size_t n, std::size_t m, std::size_t K) {
  std::vector<std::size_t> order(n * m);
  std::iota(order.begin(), order.end(), 0);
  // Rank by (value desc, index asc) without relying on a stable sort.
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (lambda(a) != lambda(b)) return lambda(a) > lambda(b);
    return a < b;
  });
  std::set<std::size_t> sa, sg;
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t be = 1; be <= n; ++be)
      for (std::size_t ze = 1; ze <= m; ++ze)
        if (m * (be - 1) + ze == order[k] + 1) {
          sa.insert(be);
          sg.insert(ze);
        }
  }
  return {{sa.begin(), sa.end()}, {sg.begin(), sg.end()}};
}

struct Layer {
  LayerFactorBatch batch;
  KronEigenbasis basis;
  Matrix exact;
};

Layer random_layer(Rng& rng, Eigen::Index n, Eigen::Index m, Eigen::Index count) {
  Layer l;
  l.batch = random_batch(rng, n, m, count);
  l.basis = build_eigenbasis(l.batch);
  l.exact = exact_block_im(l.batch).matrix;
  return l;
}

// EFB truncated to an arbitrary index set of eigenpairs.
Matrix efb_subset(const KronEigenbasis& b, const std::vector<std::size_t>& idx) {
  Vector lam = Vector::Zero(b.lambda.size());
  for (std::size_t i : idx) lam(i) = b.lambda(i);
  return materialize_efb(b.U_A, b.U_G, lam);
}

}  // namespace

TEST(TopK, StableTies) {
  Vector v(5);
  v << 1, 3, 3, 2, 3;
  EXPECT_EQ(top_k_indices(v, 3), (std::vector<std::size_t>{1, 2, 4}));
  EXPECT_THROW(top_k_indices(v, 0), ContractViolation);
  EXPECT_THROW(top_k_indices(v, 6), ContractViolation);
}

TEST(Sparsify, ToyExampleKeepsTopThreePlusOne) {
  Vector lambda(6);
  lambda << 6, 5, 4, 3, 2, 1;
  SparsifiedSpectrum s = spectral_sparsify(Matrix::Identity(3, 3), Matrix::Identity(2, 2), lambda, 3);
  EXPECT_EQ(s.kept_A, (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(s.kept_G, (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(s.L(), 4u);
  EXPECT_EQ(s.U_a.cols(), 2);
  EXPECT_EQ(s.U_g.cols(), 2);
  EXPECT_EQ(s.lambda_L, (Vector(Eigen::Vector4d(6, 5, 4, 3))));
}

TEST(Sparsify, FullRankKeepsEverything) {
  Rng rng = make_stream(40);
  Matrix ua = random_orthogonal(rng, 4), ug = random_orthogonal(rng, 3);
  Vector lambda = random_vector(rng, 12).cwiseAbs();
  SparsifiedSpectrum s = spectral_sparsify(ua, ug, lambda, 12);
  EXPECT_EQ(s.L(), 12u);
  EXPECT_EQ(s.lambda_L, lambda);
  EXPECT_EQ(s.U_a, ua);
  EXPECT_EQ(s.U_g, ug);
}

TEST(Sparsify, KOutOfRange) {
  EXPECT_THROW(spectral_sparsify(Matrix::Identity(2, 2), Matrix::Identity(2, 2), Vector::Ones(4), 0),
               ContractViolation);
  EXPECT_THROW(spectral_sparsify(Matrix::Identity(2, 2), Matrix::Identity(2, 2), Vector::Ones(4), 5),
               ContractViolation);
}

TEST(Sparsify, ExhaustiveOracle) {
  Rng rng = make_stream(41);
  for (std::size_t n = 1; n <= 6; ++n) {
    for (std::size_t m = 1; m <= 6; ++m) {
      if (n * m > 36) continue;
      Matrix ua = random_orthogonal(rng, static_cast<Eigen::Index>(n));
      Matrix ug = random_orthogonal(rng, static_cast<Eigen::Index>(m));
      Matrix full = kron_materialize(ua, ug);
      Vector lambda = random_vector(rng, static_cast<Eigen::Index>(n * m)).cwiseAbs();
      if (n * m > 3) lambda(1) = lambda(2);  // exercise a tie
      for (std::size_t K = 1; K <= n * m; ++K) {
        SparsifiedSpectrum s = spectral_sparsify(ua, ug, lambda, K);
        Oracle o = brute_force(lambda, n, m, K);
        ASSERT_EQ(s.kept_A, o.kept_A);
        ASSERT_EQ(s.kept_G, o.kept_G);
        ASSERT_GE(s.L(), K);
        // Columns of U_a (x) U_g are the selected columns of U_A (x) U_G with matching eigenvalues.
        Matrix sub = kron_materialize(s.U_a, s.U_g);
        const std::size_t g = s.kept_G.size();
        for (std::size_t p = 0; p < s.kept_A.size(); ++p) {
          for (std::size_t q = 0; q < g; ++q) {
            const std::size_t j = m * (s.kept_A[p] - 1) + s.kept_G[q] - 1;
            ASSERT_EQ(s.lambda_L(g * p + q), lambda(j));
            ASSERT_EQ(sub.col(g * p + q), full.col(j));
          }
        }
      }
    }
  }
}

TEST(Sparsify, OrderingMatchesGatheredEigenpairs) {
  Rng rng = make_stream(42);
  Layer l = random_layer(rng, 4, 3, 20);
  SparsifiedSpectrum s = spectral_sparsify(l.basis.U_A, l.basis.U_G, l.basis.lambda, 5);
  Matrix full = kron_materialize(l.basis.U_A, l.basis.U_G);
  Matrix gathered = Matrix::Zero(12, 12);
  for (std::size_t a : s.kept_A)
    for (std::size_t g : s.kept_G) {
      const std::size_t j = kron_row_index(a, g, 3) - 1;
      gathered += l.basis.lambda(j) * full.col(j) * full.col(j).transpose();
    }
  Matrix v = kron_materialize(s.U_a, s.U_g);
  EXPECT_LE((v * s.lambda_L.asDiagonal() * v.transpose() - gathered).norm(), 1e-12 * gathered.norm());
}

TEST(Sparsify, KeptColumnsOrthonormal) {
  Rng rng = make_stream(43);
  Layer l = random_layer(rng, 5, 4, 30);
  SparseInfoForm f = sparsify_layer(l.basis, 6);
  EXPECT_LE((f.U_a.transpose() * f.U_a - Matrix::Identity(f.U_a.cols(), f.U_a.cols())).norm(), 1e-10);
  EXPECT_LE((f.U_g.transpose() * f.U_g - Matrix::Identity(f.U_g.cols(), f.U_g.cols())).norm(), 1e-10);
  for (std::size_t idx : top_k_indices(l.basis.lambda, 6)) {
    const auto [b, z] = kron_row_inverse(idx + 1, 4);
    EXPECT_TRUE(std::binary_search(f.kept_A.begin(), f.kept_A.end(), b));
    EXPECT_TRUE(std::binary_search(f.kept_G.begin(), f.kept_G.end(), z));
  }
}

TEST(Assemble, FullRankMatchesFisherCorrection) {
  Rng rng = make_stream(44);
  Layer l = random_layer(rng, 3, 2, 10);
  SparseInfoForm f = sparsify_layer(l.basis, 6);
  EXPECT_LE((f.D - l.basis.D).norm(), 1e-14 * l.basis.exact_diag.norm());
}

TEST(Assemble, DiagonalExactAtEveryRank) {
  Rng rng = make_stream(45);
  Layer l = random_layer(rng, 4, 3, 25);
  for (std::size_t K = 1; K <= 12; ++K) {
    Matrix inf = materialize_inf(sparsify_layer(l.basis, K));
    EXPECT_LE((inf.diagonal() - l.exact.diagonal()).norm(), 1e-10 * l.exact.diagonal().norm());
  }
}

TEST(Assemble, OffDiagonalErrorNonIncreasingInRank) {
  Rng rng = make_stream(46);
  NetworkSpec s;
  s.layer_sizes = {3, 6, 1};
  s.activation = Activation::tanh;
  Weights w = init_weights(s, rng);
  Dataset d = random_regression(rng, 64, 3, 1);
  for (const auto& b : per_sample_factors(s, w, d, LabelMode::model_sampled, rng)) {
    KronEigenbasis eb = build_eigenbasis(b);
    Matrix exact = exact_block_im(b).matrix;
    const std::size_t N = eb.size();
    double prev = std::numeric_limits<double>::infinity();
    for (double frac : {0.25, 0.5, 0.75, 1.0}) {
      const auto K = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(frac * static_cast<double>(N))));
      Matrix diff = exact - materialize_inf(sparsify_layer(eb, K));
      diff.diagonal().setZero();
      EXPECT_LE(diff.norm(), prev + 1e-12 * exact.norm());
      prev = diff.norm();
    }
  }
}

// On materialized instances the Kronecker-closed set sits between
// exact top-K and exact top-L truncations of the EFB spectrum.
TEST(Property, SandwichBetweenTopKAndTopL) {
  Rng rng = make_stream(47);
  int checked = 0;
  for (int trial = 0; trial < 60; ++trial) {
    std::uniform_int_distribution<Eigen::Index> dim(2, 6);
    Layer l = random_layer(rng, dim(rng), dim(rng), 8 + trial);
    const std::size_t N = l.basis.size();
    std::uniform_int_distribution<std::size_t> pick(1, N - 1);
    const std::size_t K = pick(rng);
    SparseInfoForm f = sparsify_layer(l.basis, K);
    if (f.L() <= K) continue;
    ++checked;
    const double e_topk = (l.exact - efb_subset(l.basis, top_k_indices(l.basis.lambda, K))).norm();
    const double e_topl = (l.exact - efb_subset(l.basis, top_k_indices(l.basis.lambda, f.L()))).norm();
    const double e_ours = (l.exact - materialize_low_rank(f)).norm();
    const double slack = 1e-12 * l.exact.norm();
    EXPECT_GE(e_topk + slack, e_ours);
    EXPECT_GE(e_ours + slack, e_topl);
  }
  EXPECT_GT(checked, 20);
}

TEST(Property, ZeroTailMatchesFullInf) {
  // Dead input features and dead output units give exact zero eigenvalues.
  Rng rng = make_stream(48);
  for (int trial = 0; trial < 10; ++trial) {
    LayerFactorBatch b = random_batch(rng, 5, 4, 40);
    b.a.row(1).setZero();
    b.g.row(2).setZero();
    KronEigenbasis eb = build_eigenbasis(b);
    Matrix exact = exact_block_im(b).matrix;
    std::size_t K = 0;
    for (Eigen::Index i = 0; i < eb.lambda.size(); ++i) K += eb.lambda(i) > 1e-12 * eb.lambda.maxCoeff();
    SparseInfoForm f = sparsify_layer(eb, K);
    Matrix i_efb = materialize_efb(eb.U_A, eb.U_G, eb.lambda);
    Matrix i_inf = i_efb;
    i_inf.diagonal() += eb.D;
    const double e_hat = (exact - materialize_inf(f)).norm();
    EXPECT_LE(e_hat, (exact - i_efb).norm() + 1e-12 * exact.norm());
    EXPECT_NEAR(e_hat, (exact - i_inf).norm(), 1e-10 * exact.norm());
  }
}

TEST(Validity, AllPositiveIsValid) {
  SparseInfoForm f;
  f.U_a = Matrix::Identity(2, 2);
  f.U_g = Matrix::Identity(1, 1);
  f.lambda_L = Vector::Ones(2);
  f.D = Vector::Ones(2);
  f.exact_diag = Vector::Constant(2, 2.0);
  f.active = {0, 1};
  ValidityReport r = check_validity(f);
  EXPECT_EQ(r.verdict, Verdict::valid);
  EXPECT_EQ(r.form.D, f.D);
}

TEST(Validity, NegativeDIsClippedAndCholeskySucceeds) {
  Rng rng = make_stream(49);
  Layer l = random_layer(rng, 3, 2, 12);
  SparseInfoForm f = sparsify_layer(l.basis, 3);
  f.D(2) = -1e-12;
  ValidityReport r = check_validity(f);
  EXPECT_EQ(r.verdict, Verdict::repaired);
  EXPECT_EQ(r.form.D(2), 1e-8);
  EXPECT_NO_THROW(cholesky(materialize_inf(r.form)));
}

TEST(Validity, ZeroEigenvalueIsDropped) {
  Rng rng = make_stream(50);
  Layer l = random_layer(rng, 3, 2, 12);
  SparseInfoForm f = sparsify_layer(l.basis, 6);
  f.lambda_L(4) = 0.0;
  ValidityReport r = check_validity(f);
  EXPECT_EQ(r.dropped_eigenvalues, 1u);
  EXPECT_EQ(std::count(r.form.active.begin(), r.form.active.end(), 4u), 0);
  EXPECT_NE(r.verdict, Verdict::valid);
}

TEST(Validity, DeadUnitIsDegenerate) {
  Rng rng = make_stream(51);
  LayerFactorBatch b = random_batch(rng, 3, 2, 12);
  b.g.row(1).setZero();
  ValidityReport r = check_validity(sparsify_layer(build_eigenbasis(b), 6));
  EXPECT_EQ(r.verdict, Verdict::degenerate);
  EXPECT_EQ(r.zero_diagonal, 3u);
}
