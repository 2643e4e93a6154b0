// SPDX-License-Identifier: Apache-2.0
//
// Metrics and the executable theorem checks on materialized small instances.

#ifndef SPARSEINF_EVAL_HPP
#define SPARSEINF_EVAL_HPP

#include "sparseinf/kronlin.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace sparseinf {

/// Diagonal and off-diagonal errors, each normalized by the same part of the
/// reference. A part whose reference norm is zero is undefined (nullopt).
struct FrobeniusReport {
  std::optional<double> diag_err;
  std::optional<double> offdiag_err;
  std::string estimator;
  double rank_fraction = 1.0;
};

FrobeniusReport frobenius_errors(const Matrix& exact, const Matrix& approx, std::string estimator = {},
                                 double rank_fraction = 1.0);

constexpr std::size_t kDefaultEceBins = 15;

/// Expected calibration error with equal-width bins (lo, hi] on the top-class
/// probability; confidence 0 falls in the first bin. nullopt for empty input.
std::optional<double> ece(const Matrix& probs, const std::vector<int>& labels, std::size_t n_bins = kDefaultEceBins);

struct CalibrationBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  double accuracy = 0.0;
  double confidence = 0.0;
};

std::vector<CalibrationBin> calibration_bins(const Matrix& probs, const std::vector<int>& labels,
                                             std::size_t n_bins = kDefaultEceBins);

/// -sum p log p / log C for one distribution; 0 log 0 = 0.
double normalized_entropy(const Eigen::Ref<const Vector>& p);

/// Row-wise normalized entropy.
Vector normalized_entropy_rows(const Matrix& probs);

struct RegressionMetrics {
  double rmse = 0.0;
  double log_likelihood = 0.0;  // mean Gaussian log density per target entry
};

RegressionMetrics regression_metrics(const Matrix& preds, const Matrix& targets, const Matrix& variances);

struct LemmaConfig {
  std::size_t trials = 100;
  std::uint64_t seed = 0;
  std::size_t max_width = 16;
  std::size_t max_layers = 3;
  std::size_t min_batch = 8;
  std::size_t max_batch = 256;
  double equality_rtol = 1e-10;
  double slack = 1e-12;  // relative to ||I||_F
  bool inject_fault = false;
};

struct LemmaCheck {
  std::string name;
  std::size_t passed = 0;
  std::size_t failed = 0;
  std::size_t vacuous = 0;
  double worst = 0.0;  // largest violation / tolerance ratio seen
};

struct LemmaReport {
  std::size_t trials = 0;
  std::size_t layers_checked = 0;
  std::vector<LemmaCheck> checks;
  std::vector<std::string> failures;  // first few, for diagnostics

  bool all_passed() const;
  const LemmaCheck& check(const std::string& name) const;
};

/// Runs the theorem suite over random nets and batches. Violations are
/// recorded, never thrown.
LemmaReport verify_lemmas(const LemmaConfig& config);

std::string to_json(const LemmaReport& report);

}  // namespace sparseinf

#endif  // SPARSEINF_EVAL_HPP
