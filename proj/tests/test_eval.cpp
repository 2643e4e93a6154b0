// SPDX-License-Identifier: Apache-2.0
#include "sparseinf/errors.hpp"
#include "sparseinf/eval.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <numbers>

using namespace sparseinf;
using namespace sparseinf::testing;

TEST(Frobenius, IdenticalIsZero) {
  Rng rng = make_stream(1);
  Matrix I = random_spd(rng, 6);
  FrobeniusReport r = frobenius_errors(I, I, "inf", 0.5);
  EXPECT_EQ(*r.diag_err, 0.0);
  EXPECT_EQ(*r.offdiag_err, 0.0);
  EXPECT_EQ(r.estimator, "inf");
}

TEST(Frobenius, DiagonalEstimatorHasUnitOffDiagonalError) {
  Rng rng = make_stream(2);
  Matrix I = random_spd(rng, 7);
  Matrix d = I.diagonal().asDiagonal();
  FrobeniusReport r = frobenius_errors(I, d);
  EXPECT_EQ(*r.diag_err, 0.0);
  EXPECT_NEAR(*r.offdiag_err, 1.0, 1e-15);
}

TEST(Frobenius, PerturbationAgainstLoopOracle) {
  Rng rng = make_stream(3);
  Matrix I = random_spd(rng, 5);
  Matrix J = I + 0.1 * random_matrix(rng, 5, 5);
  double dd = 0, dr = 0, od = 0, orr = 0;
  for (int i = 0; i < 5; ++i) {
    for (int k = 0; k < 5; ++k) {
      const double diff = (I(i, k) - J(i, k)) * (I(i, k) - J(i, k));
      if (i == k) {
        dd += diff;
        dr += I(i, k) * I(i, k);
      } else {
        od += diff;
        orr += I(i, k) * I(i, k);
      }
    }
  }
  FrobeniusReport r = frobenius_errors(I, J);
  EXPECT_NEAR(*r.diag_err, std::sqrt(dd / dr), 1e-12);
  EXPECT_NEAR(*r.offdiag_err, std::sqrt(od / orr), 1e-12);
}

TEST(Frobenius, ZeroReferencePartIsUndefined) {
  Matrix I = Eigen::Vector3d(1, 2, 3).asDiagonal();
  FrobeniusReport r = frobenius_errors(I, Matrix::Ones(3, 3));
  EXPECT_TRUE(r.diag_err.has_value());
  EXPECT_FALSE(r.offdiag_err.has_value());
  EXPECT_FALSE(frobenius_errors(Matrix::Zero(2, 2), Matrix::Ones(2, 2)).diag_err.has_value());
  EXPECT_THROW(frobenius_errors(Matrix::Zero(2, 2), Matrix::Zero(3, 3)), ContractViolation);
}

TEST(Frobenius, InvariantUnderSymmetricPermutation) {
  Rng rng = make_stream(4);
  Matrix I = random_spd(rng, 6), J = random_spd(rng, 6);
  Eigen::PermutationMatrix<Eigen::Dynamic> P(6);
  P.indices() << 3, 0, 5, 1, 4, 2;
  FrobeniusReport a = frobenius_errors(I, J);
  FrobeniusReport b = frobenius_errors(P * I * P.transpose(), P * J * P.transpose());
  EXPECT_NEAR(*a.diag_err, *b.diag_err, 1e-14);
  EXPECT_NEAR(*a.offdiag_err, *b.offdiag_err, 1e-14);
}

TEST(Ece, PerfectlyCalibratedTwoBins) {
  // 0.6 confident: 6 of 10 right; 0.9 confident: 9 of 10 right.
  Matrix p(20, 2);
  std::vector<int> labels;
  for (int i = 0; i < 20; ++i) {
    const double c = i < 10 ? 0.6 : 0.9;
    p.row(i) << c, 1 - c;
    const int right = i < 10 ? 6 : 9;
    labels.push_back((i % 10) < right ? 0 : 1);
  }
  EXPECT_NEAR(*ece(p, labels), 0.0, 1e-12);
}

TEST(Ece, FullyConfidentHalfWrong) {
  Matrix p(4, 2);
  p << 1, 0, 1, 0, 0, 1, 0, 1;
  EXPECT_NEAR(*ece(p, {0, 1, 1, 0}), 0.5, 1e-15);
}

TEST(Ece, EmptyIsUndefined) { EXPECT_FALSE(ece(Matrix(0, 3), {}).has_value()); }

TEST(Ece, BruteForceOracleAndOrderInvariance) {
  Rng rng = make_stream(5);
  const int n = 300, C = 4, B = 15;
  Matrix p = random_matrix(rng, n, C).array().exp();
  for (int r = 0; r < n; ++r) p.row(r) /= p.row(r).sum();
  std::vector<int> labels;
  std::uniform_int_distribution<int> cls(0, C - 1);
  for (int r = 0; r < n; ++r) labels.push_back(cls(rng));
  double oracle = 0;
  for (int b = 0; b < B; ++b) {
    const double lo = double(b) / B, hi = double(b + 1) / B;
    double cnt = 0, acc = 0, conf = 0;
    for (int r = 0; r < n; ++r) {
      int arg = 0;
      for (int c = 1; c < C; ++c) {
        if (p(r, c) > p(r, arg)) arg = c;
      }
      const double m = p(r, arg);
      if (m > lo && m <= hi) {
        cnt += 1;
        conf += m;
        acc += arg == labels[r];
      }
    }
    if (cnt > 0) oracle += std::abs(acc - conf) / n;
  }
  EXPECT_NEAR(*ece(p, labels), oracle, 1e-12);
  Matrix q = p.colwise().reverse();
  std::vector<int> rl(labels.rbegin(), labels.rend());
  EXPECT_NEAR(*ece(q, rl), oracle, 1e-12);
}

TEST(Ece, RejectsBadLabels) {
  EXPECT_THROW(ece(Matrix::Constant(2, 2, 0.5), {0, 2}), ContractViolation);
  EXPECT_THROW(ece(Matrix::Constant(2, 2, 0.5), {0}), ContractViolation);
  EXPECT_THROW(ece(Matrix::Constant(2, 2, 0.5), {0, 1}, 0), ContractViolation);
}

TEST(Entropy, HandValues) {
  EXPECT_NEAR(normalized_entropy(Vector::Constant(5, 0.2)), 1.0, 1e-15);
  EXPECT_EQ(normalized_entropy(Vector::Unit(4, 2)), 0.0);
  EXPECT_NEAR(normalized_entropy(Eigen::Vector4d(0.5, 0.5, 0, 0)), 0.5, 1e-15);
  Matrix p(2, 4);
  p << 0.25, 0.25, 0.25, 0.25, 0, 0, 1, 0;
  Vector h = normalized_entropy_rows(p);
  EXPECT_NEAR(h(0), 1.0, 1e-15);
  EXPECT_EQ(h(1), 0.0);
}

TEST(Regression, HandValues) {
  const double c = -0.5 * std::log(2 * std::numbers::pi);
  Matrix t = Matrix::Random(4, 1);
  RegressionMetrics m = regression_metrics(t, t, Matrix::Ones(4, 1));
  EXPECT_EQ(m.rmse, 0.0);
  EXPECT_NEAR(m.log_likelihood, c, 1e-15);
  m = regression_metrics(Matrix::Zero(1, 1), Matrix::Ones(1, 1), Matrix::Ones(1, 1));
  EXPECT_NEAR(m.rmse, 1.0, 1e-15);
  EXPECT_NEAR(m.log_likelihood, c - 0.5, 1e-15);
  EXPECT_THROW(regression_metrics(t, t, Matrix::Zero(4, 1)), ContractViolation);
}

TEST(Regression, BatchMatchesLoop) {
  Rng rng = make_stream(6);
  Matrix p = random_matrix(rng, 30, 2), t = random_matrix(rng, 30, 2);
  Matrix v = random_matrix(rng, 30, 2).array().square() + 0.1;
  double se = 0, ll = 0;
  for (int i = 0; i < 30; ++i) {
    for (int k = 0; k < 2; ++k) {
      const double r = p(i, k) - t(i, k);
      se += r * r;
      ll += -0.5 * std::log(2 * std::numbers::pi * v(i, k)) - r * r / (2 * v(i, k));
    }
  }
  RegressionMetrics m = regression_metrics(p, t, v);
  EXPECT_NEAR(m.rmse, std::sqrt(se / 60), 1e-12);
  EXPECT_NEAR(m.log_likelihood, ll / 60, 1e-12);
}

TEST(Lemmas, SmallSuitePasses) {
  LemmaConfig c;
  c.trials = 15;
  c.seed = 3;
  LemmaReport r = verify_lemmas(c);
  EXPECT_TRUE(r.all_passed()) << to_json(r);
  EXPECT_EQ(r.trials, 15u);
  for (const LemmaCheck& k : r.checks) EXPECT_GT(k.passed, 0u) << k.name;
}

TEST(Lemmas, FaultInjectionBreaksInfVsEfb) {
  LemmaConfig c;
  c.trials = 3;
  c.inject_fault = true;
  LemmaReport r = verify_lemmas(c);
  EXPECT_FALSE(r.all_passed());
  EXPECT_EQ(r.check("inf_vs_efb").passed, 0u);
  EXPECT_GT(r.check("exact_diagonal").failed, 0u);
  EXPECT_FALSE(r.failures.empty());
}

TEST(Lemmas, ZeroTrialsIsVacuous) {
  LemmaConfig c;
  c.trials = 0;
  LemmaReport r = verify_lemmas(c);
  EXPECT_TRUE(r.all_passed());
  auto j = nlohmann::json::parse(to_json(r));
  EXPECT_EQ(j["trials"], 0);
  EXPECT_EQ(j["schema_version"], 1);
  EXPECT_TRUE(j["all_passed"].get<bool>());
}

TEST(Lemmas, Deterministic) {
  LemmaConfig c;
  c.trials = 4;
  c.seed = 77;
  EXPECT_EQ(to_json(verify_lemmas(c)), to_json(verify_lemmas(c)));
}
