// SPDX-License-Identifier: Apache-2.0
#include "sparseinf/errors.hpp"
#include "sparseinf/fisher.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace sparseinf;
using namespace sparseinf::testing;

TEST(ExactBlock, SingleSampleRankOne) {
  Rng rng = make_stream(20);
  LayerFactorBatch b = random_batch(rng, 3, 2, 1);
  Vector v = b.sample_gradient(0);
  EXPECT_LE((exact_block_im(b).matrix - v * v.transpose()).norm(), 1e-14 * v.squaredNorm());
}

TEST(ExactBlock, TwoSampleHandAverage) {
  // 1-1 net: a = (x, 1), g scalar.
  LayerFactorBatch b;
  b.a.resize(2, 2);
  b.a << 2.0, -1.0, 1.0, 1.0;
  b.g.resize(1, 2);
  b.g << 3.0, 0.5;
  Matrix hand(2, 2);
  // sample 1: grad (6, 3); sample 2: grad (-0.5, 0.5)
  hand << (36 + 0.25) / 2, (18 - 0.25) / 2, (18 - 0.25) / 2, (9 + 0.25) / 2;
  EXPECT_LE((exact_block_im(b).matrix - hand).norm(), 1e-12);
}

TEST(ExactBlock, MatchesNaiveAndDiag) {
  Rng rng = make_stream(21);
  LayerFactorBatch b = random_batch(rng, 4, 3, 17);
  Matrix e = exact_block_im(b).matrix;
  EXPECT_LE(rel_frobenius(e, naive_exact_block(b)), 1e-12);
  EXPECT_LE((e.diagonal() - diag_fisher(b)).cwiseAbs().maxCoeff(), 1e-12 * e.diagonal().maxCoeff());
  EXPECT_TRUE(is_symmetric(e, 0.0));
  EXPECT_GE(sym_eig(e).values.minCoeff(), -1e-10 * e.norm());
}

TEST(ExactBlock, RefusesOverCap) {
  Rng rng = make_stream(22);
  LayerFactorBatch b = random_batch(rng, 10, 10, 2);
  EXPECT_THROW(exact_block_im(b, 99), ContractViolation);
  EXPECT_NO_THROW(exact_block_im(b, 100));
}

TEST(Kfac, SingleSampleIsExact) {
  Rng rng = make_stream(23);
  LayerFactorBatch b = random_batch(rng, 3, 2, 1);
  EXPECT_LE(rel_frobenius(materialize_kfac(kfac(b)), exact_block_im(b).matrix), 1e-12);
}

TEST(Kfac, ConstantActivationsAreExact) {
  Rng rng = make_stream(24);
  LayerFactorBatch b = random_batch(rng, 3, 2, 2);
  b.a.col(1) = b.a.col(0);
  EXPECT_LE(rel_frobenius(materialize_kfac(kfac(b)), exact_block_im(b).matrix), 1e-12);
}

TEST(Kfac, RandomBatchHasPositiveError) {
  Rng rng = make_stream(25);
  LayerFactorBatch b = random_batch(rng, 3, 2, 10);
  EXPECT_GT((exact_block_im(b).matrix - materialize_kfac(kfac(b))).norm(), 0.0);
}

TEST(Kfac, FactorsAreMeans) {
  Rng rng = make_stream(26);
  LayerFactorBatch b = random_batch(rng, 3, 4, 6);
  KronFactors k = kfac(b);
  EXPECT_LE((k.A - b.a * b.a.transpose() / 6.0).norm(), 1e-12);
  EXPECT_LE((k.G - b.g * b.g.transpose() / 6.0).norm(), 1e-12);
}

TEST(Efb, SingleSampleSquaredRotation) {
  Rng rng = make_stream(27);
  LayerFactorBatch b = random_batch(rng, 3, 2, 1);
  EfbSpectrum e = efb(kfac(b), b);
  Vector rot = kron_materialize(e.U_A, e.U_G).transpose() * b.sample_gradient(0);
  EXPECT_LE((e.lambda - rot.cwiseAbs2()).norm(), 1e-12 * rot.squaredNorm());
}

TEST(Efb, MatchesMaterializedRotation) {
  Rng rng = make_stream(28);
  for (int trial = 0; trial < 10; ++trial) {
    LayerFactorBatch b = random_batch(rng, 3, 2, 12);
    EfbSpectrum e = efb(kfac(b), b);
    Matrix v = kron_materialize(e.U_A, e.U_G);
    Vector oracle = (v.transpose() * exact_block_im(b).matrix * v).diagonal();
    EXPECT_LE((e.lambda - oracle).norm(), 1e-10 * oracle.norm());
    EXPECT_TRUE((e.lambda.array() >= 0.0).all());
  }
}

TEST(Efb, IndependentFactorsGiveProductSpectrum) {
  // Full cross product of an a-set and a g-set: E[aa^T (x) gg^T] = A (x) G exactly.
  Rng rng = make_stream(29);
  Matrix as = random_matrix(rng, 3, 4), gs = random_matrix(rng, 2, 5);
  as.row(2).setOnes();
  LayerFactorBatch b;
  b.a.resize(3, 20);
  b.g.resize(2, 20);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 5; ++j) {
      b.a.col(5 * i + j) = as.col(i);
      b.g.col(5 * i + j) = gs.col(j);
    }
  KronFactors k = kfac(b);
  EfbSpectrum e = efb(k, b);
  for (Eigen::Index be = 0; be < 3; ++be)
    for (Eigen::Index ze = 0; ze < 2; ++ze)
      EXPECT_NEAR(e.lambda(2 * be + ze), e.s_A(be) * e.s_G(ze), 1e-10 * e.lambda.maxCoeff());
}

TEST(Efb, FrobeniusOrderingAgainstKfac) {
  Rng rng = make_stream(30);
  for (int trial = 0; trial < 20; ++trial) {
    NetworkSpec s = random_spec(rng, 5);
    Weights w = init_weights(s, rng);
    Dataset d = random_regression(rng, 30, s.input_dim(), s.output_dim());
    for (const auto& b : per_sample_factors(s, w, d, LabelMode::model_sampled, rng)) {
      Matrix exact = exact_block_im(b).matrix;
      KronFactors k = kfac(b);
      EfbSpectrum e = efb(k, b);
      const double err_kfac = (exact - materialize_kfac(k)).norm();
      const double err_efb = (exact - materialize_efb(e.U_A, e.U_G, e.lambda)).norm();
      EXPECT_LE(err_efb, err_kfac + 1e-12 * exact.norm());
    }
  }
}

TEST(EfbDiagonal, IdentityBasisReturnsLambda) {
  Rng rng = make_stream(31);
  Vector lambda = random_vector(rng, 6).cwiseAbs();
  EXPECT_TRUE(efb_diagonal(Matrix::Identity(3, 3), Matrix::Identity(2, 2), lambda).isApprox(lambda));
}

TEST(EfbDiagonal, MatchesMaterialized) {
  Rng rng = make_stream(32);
  Matrix ua = random_orthogonal(rng, 3), ug = random_orthogonal(rng, 2);
  Vector lambda = random_vector(rng, 6).cwiseAbs();
  Vector d = efb_diagonal(ua, ug, lambda);
  Vector oracle = materialize_efb(ua, ug, lambda).diagonal();
  EXPECT_LE((d - oracle).cwiseAbs().maxCoeff(), 1e-12 * oracle.maxCoeff());
  EXPECT_TRUE((d.array() >= 0.0).all());
}

TEST(EfbDiagonal, ColumnSubsets) {
  Rng rng = make_stream(33);
  Matrix ua = random_orthogonal(rng, 4).leftCols(2), ug = random_orthogonal(rng, 3).leftCols(2);
  Vector lambda = random_vector(rng, 4).cwiseAbs();
  Vector oracle = materialize_efb(ua, ug, lambda).diagonal();
  EXPECT_LE((efb_diagonal(ua, ug, lambda) - oracle).cwiseAbs().maxCoeff(), 1e-12 * oracle.maxCoeff());
}

TEST(EfbDiagonal, ZeroLambda) {
  Rng rng = make_stream(34);
  EXPECT_TRUE(efb_diagonal(random_orthogonal(rng, 3), random_orthogonal(rng, 2), Vector::Zero(6)).isZero(0.0));
}

TEST(DiagonalCorrection, EqualInputsGiveZero) {
  Vector v = Vector::LinSpaced(5, 0.1, 2.0);
  EXPECT_TRUE(diagonal_correction(v, v).isZero(0.0));
  EXPECT_THROW(diagonal_correction(v, Vector::Zero(4)), ContractViolation);
}

TEST(DiagonalCorrection, InfDiagonalIsExactAndErrorShrinks) {
  Rng rng = make_stream(35);
  for (int trial = 0; trial < 20; ++trial) {
    LayerFactorBatch b = random_batch(rng, 3 + trial % 3, 2 + trial % 2, 10 + trial);
    KronEigenbasis eb = build_eigenbasis(b);
    Matrix exact = exact_block_im(b).matrix;
    Matrix i_efb = materialize_efb(eb.U_A, eb.U_G, eb.lambda);
    Matrix i_inf = i_efb;
    i_inf.diagonal() += eb.D;
    EXPECT_LE((i_inf.diagonal() - exact.diagonal()).norm(), 1e-10 * exact.diagonal().norm());
    EXPECT_LE((exact - i_inf).norm(), (exact - i_efb).norm() + 1e-12 * exact.norm());
    EXPECT_LE((eb.D - (eb.exact_diag - efb_diagonal(eb.U_A, eb.U_G, eb.lambda))).norm(), 1e-12);
  }
}

TEST(DiagFisher, SingleSampleAndZero) {
  Rng rng = make_stream(36);
  LayerFactorBatch b = random_batch(rng, 3, 2, 1);
  EXPECT_LE((diag_fisher(b) - b.sample_gradient(0).cwiseAbs2()).norm(), 1e-14);
  b.g.setZero();
  EXPECT_TRUE(diag_fisher(b).isZero(0.0));
}

TEST(Accumulators, ChunkingInvariance) {
  Rng rng = make_stream(37);
  LayerFactorBatch b = random_batch(rng, 4, 3, 30);
  LayerFactorBatch c1{b.a.leftCols(11), b.g.leftCols(11)}, c2{b.a.rightCols(19), b.g.rightCols(19)};
  KfacAccumulator whole(4, 3), p1(4, 3), p2(4, 3);
  whole.add(b);
  p2.add(c2);
  p1.add(c1);
  p2.merge(p1);
  EXPECT_LE((whole.factors().A - p2.factors().A).norm(), 1e-12);
  EXPECT_LE((whole.factors().G - p2.factors().G).norm(), 1e-12);
  EXPECT_LE((whole.exact_diag() - p2.exact_diag()).norm(), 1e-12);

  KronEigenbasis eb = build_eigenbasis(b);
  EigenvalueAccumulator e1(eb.U_A, eb.U_G), e2(eb.U_A, eb.U_G);
  e1.add(c1);
  e2.add(c2);
  e1.merge(e2);
  EXPECT_LE((e1.lambda() - eb.lambda).norm(), 1e-12 * eb.lambda.norm());
}
