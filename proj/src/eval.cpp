// SPDX-License-Identifier: Apache-2.0

#include "sparseinf/eval.hpp"

#include "sparseinf/errors.hpp"
#include "sparseinf/fisher.hpp"
#include "sparseinf/net.hpp"
#include "sparseinf/random.hpp"
#include "sparseinf/sparse.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace sparseinf {

FrobeniusReport frobenius_errors(const Matrix& exact, const Matrix& approx, std::string estimator,
                                 double rank_fraction) {
  if (exact.rows() != exact.cols() || exact.rows() != approx.rows() || exact.cols() != approx.cols()) {
    throw ContractViolation("frobenius_errors: matrices must be square and of equal shape");
  }
  FrobeniusReport r;
  r.estimator = std::move(estimator);
  r.rank_fraction = rank_fraction;
  const double diag_ref = exact.diagonal().norm();
  const double diag_diff = (exact.diagonal() - approx.diagonal()).norm();
  const double total_ref2 = exact.squaredNorm();
  const double total_diff2 = (exact - approx).squaredNorm();
  const double off_ref = std::sqrt(std::max(total_ref2 - diag_ref * diag_ref, 0.0));
  const double off_diff = std::sqrt(std::max(total_diff2 - diag_diff * diag_diff, 0.0));
  if (diag_ref > 0.0) r.diag_err = diag_diff / diag_ref;
  if (off_ref > 0.0) r.offdiag_err = off_diff / off_ref;
  return r;
}

namespace {

void check_probs(const Matrix& probs, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(probs.rows()) != labels.size()) {
    throw ContractViolation("calibration: " + std::to_string(probs.rows()) + " rows but " +
                            std::to_string(labels.size()) + " labels");
  }
  for (int l : labels) {
    if (l < 0 || l >= probs.cols()) throw ContractViolation("calibration: label out of range");
  }
}

}  // namespace

std::vector<CalibrationBin> calibration_bins(const Matrix& probs, const std::vector<int>& labels,
                                             std::size_t n_bins) {
  if (n_bins < 1) throw ContractViolation("calibration: n_bins must be >= 1");
  check_probs(probs, labels);
  std::vector<CalibrationBin> bins(n_bins);
  for (std::size_t b = 0; b < n_bins; ++b) {
    bins[b].lo = static_cast<double>(b) / static_cast<double>(n_bins);
    bins[b].hi = static_cast<double>(b + 1) / static_cast<double>(n_bins);
  }
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    Eigen::Index pred = 0;
    const double conf = probs.row(r).maxCoeff(&pred);
    auto b = static_cast<std::size_t>(std::max(std::ceil(conf * static_cast<double>(n_bins)) - 1.0, 0.0));
    b = std::min(b, n_bins - 1);
    bins[b].count += 1;
    bins[b].confidence += conf;
    bins[b].accuracy += pred == labels[static_cast<std::size_t>(r)] ? 1.0 : 0.0;
  }
  for (CalibrationBin& bin : bins) {
    if (bin.count) {
      bin.confidence /= static_cast<double>(bin.count);
      bin.accuracy /= static_cast<double>(bin.count);
    }
  }
  return bins;
}

std::optional<double> ece(const Matrix& probs, const std::vector<int>& labels, std::size_t n_bins) {
  if (probs.rows() == 0) return std::nullopt;
  double total = 0.0;
  for (const CalibrationBin& bin : calibration_bins(probs, labels, n_bins)) {
    total += static_cast<double>(bin.count) * std::abs(bin.accuracy - bin.confidence);
  }
  return total / static_cast<double>(probs.rows());
}

double normalized_entropy(const Eigen::Ref<const Vector>& p) {
  if (p.size() < 2) return 0.0;
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) > 0.0) h -= p(i) * std::log(p(i));
  }
  return h / std::log(static_cast<double>(p.size()));
}

Vector normalized_entropy_rows(const Matrix& probs) {
  Vector out(probs.rows());
  for (Eigen::Index r = 0; r < probs.rows(); ++r) out(r) = normalized_entropy(probs.row(r).transpose());
  return out;
}

RegressionMetrics regression_metrics(const Matrix& preds, const Matrix& targets, const Matrix& variances) {
  if (preds.rows() != targets.rows() || preds.cols() != targets.cols() || preds.rows() != variances.rows() ||
      preds.cols() != variances.cols()) {
    throw ContractViolation("regression_metrics: shape mismatch");
  }
  if (preds.size() == 0) throw ContractViolation("regression_metrics: empty input");
  if (!(variances.array() > 0.0).all()) throw ContractViolation("regression_metrics: non-positive predictive variance");
  const Eigen::ArrayXXd r2 = (preds - targets).array().square();
  RegressionMetrics m;
  m.rmse = std::sqrt(r2.mean());
  m.log_likelihood =
      (-0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * variances.array().log() - 0.5 * r2 / variances.array()).mean();
  return m;
}

bool LemmaReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const LemmaCheck& c) { return c.failed == 0; });
}

const LemmaCheck& LemmaReport::check(const std::string& name) const {
  for (const LemmaCheck& c : checks) {
    if (c.name == name) return c;
  }
  throw ContractViolation("no lemma check named '" + name + "'");
}

namespace {

enum CheckId { kExactDiag, kInfVsEfb, kInfVsKfac, kLowRankDiag, kZeroTail, kValidSufficient, kValidRepaired, kRankSandwich, kNumChecks };

const char* const kCheckNames[kNumChecks] = {"exact_diagonal",     "inf_vs_efb",          "inf_vs_kfac",
                                              "low_rank_diagonal",  "zero_tail_equality", "validity_sufficient",
                                              "validity_repaired",  "rank_sandwich"};

class Recorder {
 public:
  explicit Recorder(LemmaReport& r) : report_(r) {
    report_.checks.clear();
    for (const char* n : kCheckNames) report_.checks.push_back(LemmaCheck{n, 0, 0, 0, -std::numeric_limits<double>::infinity()});
  }

  // excess <= 0 passes; excess is already scaled by the tolerance unit.
  void record(CheckId id, double excess, const std::string& where) {
    LemmaCheck& c = report_.checks[id];
    c.worst = std::max(c.worst, excess);
    if (excess <= 0.0) {
      ++c.passed;
    } else {
      ++c.failed;
      if (report_.failures.size() < 20) report_.failures.push_back(c.name + " " + where);
    }
  }

  void vacuous(CheckId id) { ++report_.checks[id].vacuous; }

 private:
  LemmaReport& report_;
};

std::size_t uniform(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Matrix top_eigen_part(const Matrix& v, const Vector& lambda, std::size_t count) {
  Matrix out = Matrix::Zero(v.rows(), v.rows());
  for (std::size_t j : top_k_indices(lambda, count)) {
    const auto c = static_cast<Eigen::Index>(j);
    out.noalias() += lambda(c) * v.col(c) * v.col(c).transpose();
  }
  return out;
}

bool positive_definite(const Matrix& m) {
  try {
    cholesky(m);
    return true;
  } catch (const PositiveDefinitenessViolation&) {
    return false;
  }
}

void check_layer(const LayerFactorBatch& batch, const LemmaConfig& cfg, Rng& rng, Recorder& rec,
                 const std::string& where) {
  const Matrix exact = exact_block_im(batch).matrix;
  KronEigenbasis basis = build_eigenbasis(batch);
  const double ref = exact.norm();
  const double slack = cfg.slack * ref;
  const double diag_ref = std::max(exact.diagonal().norm(), std::numeric_limits<double>::min());
  const double fault = cfg.inject_fault ? ref + 1.0 : 0.0;
  basis.D.array() += fault;
  const std::size_t N = basis.size();

  const Matrix v = kron_materialize(basis.U_A, basis.U_G);
  const Matrix i_efb = v * basis.lambda.asDiagonal() * v.transpose();
  Matrix i_inf = i_efb;
  i_inf.diagonal() += basis.D;
  const Matrix a = basis.U_A * basis.s_A.asDiagonal() * basis.U_A.transpose();
  const Matrix g = basis.U_G * basis.s_G.asDiagonal() * basis.U_G.transpose();
  const Matrix i_kfac = kron_materialize(a, g);

  const std::size_t K = uniform(rng, 1, N);
  SparseInfoForm form = sparsify_layer(basis, K);
  form.D.array() += fault;
  const Matrix i_hat = materialize_inf(form);

  const double e_efb = (exact - i_efb).norm();
  const double e_inf = (exact - i_inf).norm();
  const double e_kfac = (exact - i_kfac).norm();
  const double ref_unit = std::max(ref, std::numeric_limits<double>::min());
  const std::string at = where + " N=" + std::to_string(N) + " K=" + std::to_string(K);

  const double d_hat = (exact.diagonal() - i_hat.diagonal()).norm();
  const double d_inf = (exact.diagonal() - i_inf.diagonal()).norm();
  rec.record(kExactDiag, (std::max(d_hat, d_inf) - cfg.equality_rtol * diag_ref) / diag_ref, at);
  rec.record(kInfVsEfb, (e_inf - e_efb - slack) / ref_unit, at);
  rec.record(kInfVsKfac, (e_inf - e_kfac - slack) / ref_unit, at);

  const double d_efb = (exact.diagonal() - i_efb.diagonal()).norm();
  const double d_kfac = (exact.diagonal() - i_kfac.diagonal()).norm();
  const double diag_excess = std::max({d_hat - d_efb - slack, d_hat - d_kfac - slack, d_hat - cfg.equality_rtol * diag_ref});
  rec.record(kLowRankDiag, diag_excess / ref_unit, at);

  const ValidityReport validity = check_validity(form);
  if (validity.verdict == Verdict::valid) {
    rec.record(kValidSufficient, positive_definite(i_hat) ? 0.0 : 1.0, at);
  } else {
    rec.vacuous(kValidSufficient);
  }
  Vector active_lambda = Vector::Zero(static_cast<Eigen::Index>(form.L()));
  for (std::size_t p : validity.form.active) active_lambda(static_cast<Eigen::Index>(p)) = form.lambda_L(static_cast<Eigen::Index>(p));
  Matrix repaired = materialize_efb(form.U_a, form.U_g, active_lambda);
  repaired.diagonal() += validity.form.D;
  rec.record(kValidRepaired, positive_definite(repaired) ? 0.0 : 1.0, at);

  if (form.L() > K) {
    const double e_ours = (exact - materialize_low_rank(form)).norm();
    const double e_top_k = (exact - top_eigen_part(v, basis.lambda, K)).norm();
    const double e_top_l = (exact - top_eigen_part(v, basis.lambda, form.L())).norm();
    rec.record(kRankSandwich, std::max(e_ours - e_top_k - slack, e_top_l - e_ours - slack) / ref_unit,
               at + " L=" + std::to_string(form.L()));
  } else {
    rec.vacuous(kRankSandwich);
  }
}

void check_zero_tail(LayerFactorBatch batch, const LemmaConfig& cfg, Rng& rng, Recorder& rec,
                     const std::string& where) {
  // Dead input features and dead output units give exactly zero eigenvalues.
  const std::size_t n = batch.n(), m = batch.m();
  if (n < 2 && m < 2) {
    rec.vacuous(kZeroTail);
    return;
  }
  if (n >= 2) batch.a.row(static_cast<Eigen::Index>(uniform(rng, 0, n - 2))).setZero();
  if (m >= 2) batch.g.row(static_cast<Eigen::Index>(uniform(rng, 0, m - 1))).setZero();
  const Matrix exact = exact_block_im(batch).matrix;
  KronEigenbasis basis = build_eigenbasis(batch);
  const double fault = cfg.inject_fault ? exact.norm() + 1.0 : 0.0;
  basis.D.array() += fault;
  const double top = basis.lambda.maxCoeff();
  std::size_t K = 0;
  for (Eigen::Index i = 0; i < basis.lambda.size(); ++i) K += basis.lambda(i) > 1e-12 * top;
  if (K == 0) {
    rec.vacuous(kZeroTail);
    return;
  }
  SparseInfoForm form = sparsify_layer(basis, K);
  form.D.array() += fault;
  const Matrix i_efb = materialize_efb(basis.U_A, basis.U_G, basis.lambda);
  Matrix i_inf = i_efb;
  i_inf.diagonal() += basis.D;
  const double ref = std::max(exact.norm(), std::numeric_limits<double>::min());
  const double e_hat = (exact - materialize_inf(form)).norm();
  const double e_efb = (exact - i_efb).norm();
  const double e_inf = (exact - i_inf).norm();
  const double excess = std::max(e_hat - e_efb - cfg.slack * ref, std::abs(e_hat - e_inf) - cfg.equality_rtol * ref);
  rec.record(kZeroTail, excess / ref, where + " zero-tail K=" + std::to_string(K));
}

}  // namespace

LemmaReport verify_lemmas(const LemmaConfig& cfg) {
  if (cfg.max_width < 1 || cfg.max_layers < 1 || cfg.min_batch < 1 || cfg.max_batch < cfg.min_batch) {
    throw ContractViolation("verify_lemmas: invalid configuration");
  }
  LemmaReport report;
  Recorder rec(report);
  for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
    Rng rng = make_stream(cfg.seed, {0x6c656d, trial});
    NetworkSpec spec;
    const std::size_t depth = uniform(rng, 1, cfg.max_layers);
    spec.layer_sizes.push_back(uniform(rng, 1, cfg.max_width));
    for (std::size_t l = 0; l < depth; ++l) spec.layer_sizes.push_back(uniform(rng, 1, cfg.max_width));
    spec.activation = uniform(rng, 0, 1) ? Activation::tanh : Activation::relu;
    const bool classify = spec.output_dim() >= 2 && uniform(rng, 0, 1) == 1;
    spec.loss = classify ? Loss::cross_entropy : Loss::mse;

    Dataset data;
    const std::size_t T = uniform(rng, cfg.min_batch, cfg.max_batch);
    std::normal_distribution<double> normal(0.0, 1.0);
    data.x = Matrix::NullaryExpr(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(spec.input_dim()),
                                 [&] { return 2.0 * normal(rng); });
    data.classification = classify;
    if (classify) {
      for (std::size_t t = 0; t < T; ++t) data.labels.push_back(static_cast<int>(uniform(rng, 0, spec.output_dim() - 1)));
    } else {
      data.y = Matrix::NullaryExpr(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(spec.output_dim()),
                                   [&] { return normal(rng); });
    }
    const Weights w = init_weights(spec, rng);
    const auto batches = per_sample_factors(spec, w, data, LabelMode::model_sampled, rng);
    for (std::size_t l = 0; l < batches.size(); ++l) {
      const std::string where = "trial=" + std::to_string(trial) + " layer=" + std::to_string(l);
      check_layer(batches[l], cfg, rng, rec, where);
      ++report.layers_checked;
    }
    check_zero_tail(batches[uniform(rng, 0, batches.size() - 1)], cfg, rng, rec, "trial=" + std::to_string(trial));
    ++report.trials;
  }
  return report;
}

std::string to_json(const LemmaReport& report) {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["trials"] = report.trials;
  j["layers_checked"] = report.layers_checked;
  j["all_passed"] = report.all_passed();
  nlohmann::ordered_json checks = nlohmann::ordered_json::array();
  for (const LemmaCheck& c : report.checks) {
    nlohmann::ordered_json e;
    e["name"] = c.name;
    e["passed"] = c.passed;
    e["failed"] = c.failed;
    e["vacuous"] = c.vacuous;
    if (std::isfinite(c.worst)) {
      e["worst_excess"] = c.worst;
    } else {
      e["worst_excess"] = nullptr;
    }
    checks.push_back(e);
  }
  j["checks"] = checks;
  j["failures"] = report.failures;
  return j.dump(2);
}

}  // namespace sparseinf
