// SPDX-License-Identifier: Apache-2.0
//
// Layer-wise Laplace posteriors for every estimator family, predictive
// distributions by Monte Carlo or linearization, and variance-based acquisition.

#ifndef SPARSEINF_POSTERIOR_HPP
#define SPARSEINF_POSTERIOR_HPP

#include "sparseinf/data.hpp"
#include "sparseinf/fisher.hpp"
#include "sparseinf/net.hpp"
#include "sparseinf/random.hpp"
#include "sparseinf/sampler.hpp"
#include "sparseinf/sparse.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sparseinf {

enum class Estimator { diag, kfac_ritter, kfac_exact, efb, inf };
enum class DegeneratePolicy { deterministic_dims, clip };

Estimator parse_estimator(std::string_view name);
DegeneratePolicy parse_policy(std::string_view name);
std::string to_string(Estimator e);
std::string to_string(DegeneratePolicy p);

/// Prior precision used when none is configured: 0.2 for the KFAC variants,
/// 0.45 for Diag, 0 for EFB and INF.
double default_tau(Estimator e);

/// "full", an absolute count ("20") or a percentage of the layer size ("25%").
struct RankSpec {
  enum class Kind { full, count, percent } kind = Kind::full;
  double value = 0.0;

  static RankSpec parse(std::string_view text);
  static RankSpec full() { return {}; }
  static RankSpec percent(double p) { return {Kind::percent, p}; }
  static RankSpec count(std::size_t k) { return {Kind::count, static_cast<double>(k)}; }
  /// K for a layer with N parameters, clamped to [1, N]. Percentages round up.
  std::size_t resolve(std::size_t N) const;
  std::string to_string() const;
};

struct PosteriorConfig {
  double n_scale = 1.0;
  std::optional<double> tau;  // default_tau(estimator) when unset
  RankSpec rank;
  std::size_t k_mc = 100;
  Estimator estimator = Estimator::inf;
  DegeneratePolicy policy = DegeneratePolicy::deterministic_dims;
  LabelMode label_mode = LabelMode::model_sampled;
  double eps = 1e-8;
  std::optional<std::size_t> rank_budget;  // report, never truncate

  double effective_tau() const { return tau ? *tau : default_tau(estimator); }
  void validate() const;
};

/// Covariance of one layer's parameters.
class LayerPosterior {
 public:
  virtual ~LayerPosterior() = default;
  virtual std::size_t size() const = 0;
  /// theta_s - theta_MAP for one draw. Consumes N standard normals.
  virtual Vector draw_offset(Rng& rng) const = 0;
  /// j^T Sigma j.
  virtual double quad_form(const Eigen::Ref<const Vector>& j) const = 0;
  virtual Vector marginal_variance() const = 0;
};

/// Diagonal precision; zero variance where the precision is infinite.
class DiagLayerPosterior final : public LayerPosterior {
 public:
  explicit DiagLayerPosterior(Vector variance) : variance_(std::move(variance)) {}
  std::size_t size() const override { return static_cast<std::size_t>(variance_.size()); }
  Vector draw_offset(Rng& rng) const override;
  double quad_form(const Eigen::Ref<const Vector>& j) const override;
  Vector marginal_variance() const override { return variance_; }

 private:
  Vector variance_;
};

/// Covariance (U_A (x) U_G) diag(variance) (U_A (x) U_G)^T.
class EigenLayerPosterior final : public LayerPosterior {
 public:
  EigenLayerPosterior(Matrix u_a, Matrix u_g, Vector variance);
  std::size_t size() const override { return static_cast<std::size_t>(variance_.size()); }
  Vector draw_offset(Rng& rng) const override;
  double quad_form(const Eigen::Ref<const Vector>& j) const override;
  Vector marginal_variance() const override;
  const Vector& spectrum_variance() const noexcept { return variance_; }

 private:
  Matrix u_a_;
  Matrix u_g_;
  Vector variance_;
  Vector stddev_;
};

/// Sparse information form sampled through the Woodbury factor.
class InfLayerPosterior final : public LayerPosterior {
 public:
  explicit InfLayerPosterior(SamplerState state) : state_(std::move(state)) {}
  std::size_t size() const override { return state_.size(); }
  Vector draw_offset(Rng& rng) const override;
  double quad_form(const Eigen::Ref<const Vector>& j) const override { return sparseinf::quad_form(state_, j); }
  Vector marginal_variance() const override { return marginal_std(state_).cwiseAbs2(); }
  const SamplerState& state() const noexcept { return state_; }

 private:
  SamplerState state_;
};

/// Per-layer summary written to manifests.
struct LayerReport {
  std::size_t N = 0;
  std::size_t K = 0;  // requested (inf only)
  std::size_t L = 0;  // realized (inf only)
  bool over_budget = false;
  std::optional<Verdict> verdict;  // inf only
  std::size_t deterministic = 0;
  std::size_t clipped = 0;
  std::string form_hash;
  std::string theta_hash;
};

/// Information form of one layer after hyperparameters, for the inf family.
struct ScaledInfoForm {
  SparseInfoForm form;  // lambda_L and D already scaled; D_i = +inf for fixed coordinates
  ValidityReport validity;
  std::size_t deterministic = 0;
};

/// Sparsify, check validity, then Lambda' = N Lambda_L and D' = N D + tau.
/// Coordinates whose total information N * exact_diag_i + tau is <= eps are
/// degenerate: fixed (D' = inf) or floored at eps depending on the policy.
ScaledInfoForm scale_inf(const KronEigenbasis& basis, const PosteriorConfig& config);

/// Precision spectrum after hyperparameters for the eigen-families
/// (kfac_ritter, kfac_exact, efb) or the diagonal precision (diag), in the
/// Kronecker index order.
Vector scaled_precision(const KronEigenbasis& basis, const PosteriorConfig& config);

/// Variance from a precision vector under the degenerate policy.
Vector precision_to_variance(const Vector& precision, const PosteriorConfig& config, std::size_t* degenerate);

std::unique_ptr<LayerPosterior> build_layer_posterior(const KronEigenbasis& basis, const Vector& theta_map,
                                                      const PosteriorConfig& config, LayerReport* report);

struct Posterior {
  NetworkSpec spec;
  Weights map;
  PosteriorConfig config;
  double sigma_alea = 0.0;
  std::vector<std::shared_ptr<const LayerPosterior>> layers;
  std::vector<LayerReport> reports;
};

/// Per-sample factors at the MAP with the label stream used for the posterior.
std::vector<LayerFactorBatch> capture_factors(const NetworkSpec& spec, const Weights& map, const Dataset& data,
                                              LabelMode mode, std::uint64_t seed);

/// Per-layer eigenbases of the information matrix at the MAP.
std::vector<KronEigenbasis> capture_eigenbases(const NetworkSpec& spec, const Weights& map, const Dataset& data,
                                               LabelMode mode, std::uint64_t seed);

/// Root mean squared training residual, used as the aleatoric standard deviation.
double residual_std(const NetworkSpec& spec, const Weights& map, const Dataset& data);

Posterior build_posterior(const NetworkSpec& spec, const Weights& map, const std::vector<KronEigenbasis>& bases,
                          const PosteriorConfig& config, double sigma_alea);

Posterior build_posterior(const NetworkSpec& spec, const Weights& map, const Dataset& data,
                          const PosteriorConfig& config, std::uint64_t seed);

struct PredictiveSummary {
  Matrix mean;      // rows = inputs; regression outputs or class probabilities
  Matrix variance;  // regression only: sample variance + sigma_alea^2
};

/// Monte Carlo predictive. Draw t of layer l uses stream (seed, t, l).
PredictiveSummary predict_mc(const Posterior& post, const Matrix& x, std::size_t k_mc, std::uint64_t seed);

/// Linearized predictive for regression: f_MAP(x) and
/// sigma_alea^2 + sum_l J_l^T Sigma_l J_l per output.
PredictiveSummary predict_linearized(const Posterior& post, const Matrix& x, double sigma_alea);

/// Index of the pool row with the largest linearized predictive variance
/// (summed over outputs); ties go to the smaller index.
std::size_t acquire(const Posterior& post, const Matrix& pool);

}  // namespace sparseinf

#endif  // SPARSEINF_POSTERIOR_HPP
