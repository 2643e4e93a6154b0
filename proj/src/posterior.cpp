// SPDX-License-Identifier: Apache-2.0

#include "sparseinf/posterior.hpp"

#include "sparseinf/errors.hpp"
#include "sparseinf/hash.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

namespace sparseinf {

namespace {

Vector standard_normal(Rng& rng, Eigen::Index n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector x(n);
  for (Eigen::Index i = 0; i < n; ++i) x(i) = normal(rng);
  return x;
}

}  // namespace

Estimator parse_estimator(std::string_view name) {
  if (name == "diag") return Estimator::diag;
  if (name == "kfac_ritter" || name == "kfac") return Estimator::kfac_ritter;
  if (name == "kfac_exact" || name == "okf") return Estimator::kfac_exact;
  if (name == "efb") return Estimator::efb;
  if (name == "inf") return Estimator::inf;
  throw ContractViolation("unknown estimator '" + std::string(name) + "'");
}

DegeneratePolicy parse_policy(std::string_view name) {
  if (name == "deterministic_dims") return DegeneratePolicy::deterministic_dims;
  if (name == "clip") return DegeneratePolicy::clip;
  throw ContractViolation("unknown degenerate policy '" + std::string(name) + "'");
}

std::string to_string(Estimator e) {
  switch (e) {
    case Estimator::diag: return "diag";
    case Estimator::kfac_ritter: return "kfac_ritter";
    case Estimator::kfac_exact: return "kfac_exact";
    case Estimator::efb: return "efb";
    case Estimator::inf: return "inf";
  }
  return "?";
}

std::string to_string(DegeneratePolicy p) {
  return p == DegeneratePolicy::clip ? "clip" : "deterministic_dims";
}

double default_tau(Estimator e) {
  switch (e) {
    case Estimator::diag: return 0.45;
    case Estimator::kfac_ritter:
    case Estimator::kfac_exact: return 0.2;
    case Estimator::efb:
    case Estimator::inf: return 0.0;
  }
  return 0.0;
}

RankSpec RankSpec::parse(std::string_view text) {
  if (text == "full") return full();
  const bool pct = !text.empty() && text.back() == '%';
  const std::string_view num = pct ? text.substr(0, text.size() - 1) : text;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), v);
  if (ec != std::errc() || ptr != num.data() + num.size() || !(v > 0.0)) {
    throw ContractViolation("rank must be 'full', a positive integer or a percentage, got '" + std::string(text) + "'");
  }
  if (pct) {
    if (v > 100.0) throw ContractViolation("rank percentage above 100");
    return percent(v);
  }
  if (v != std::floor(v)) throw ContractViolation("rank count must be an integer");
  return count(static_cast<std::size_t>(v));
}

std::size_t RankSpec::resolve(std::size_t N) const {
  if (N == 0) throw ContractViolation("RankSpec::resolve: empty layer");
  switch (kind) {
    case Kind::full: return N;
    case Kind::count: return std::clamp<std::size_t>(static_cast<std::size_t>(value), 1, N);
    case Kind::percent: {
      const double k = std::ceil(value / 100.0 * static_cast<double>(N) - 1e-9);
      return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(k, 1.0)), 1, N);
    }
  }
  return N;
}

std::string RankSpec::to_string() const {
  switch (kind) {
    case Kind::full: return "full";
    case Kind::count: return std::to_string(static_cast<std::size_t>(value));
    case Kind::percent: {
      char buf[32];
      const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
      return std::string(buf, ptr) + "%";
    }
  }
  return "full";
}

void PosteriorConfig::validate() const {
  if (!(n_scale > 0.0) || !std::isfinite(n_scale)) throw ContractViolation("N_scale must be positive");
  if (tau && !(*tau >= 0.0 && std::isfinite(*tau))) throw ContractViolation("tau must be non-negative");
  if (k_mc < 1) throw ContractViolation("K_mc must be at least 1");
  if (!(eps > 0.0)) throw ContractViolation("eps must be positive");
}

Vector DiagLayerPosterior::draw_offset(Rng& rng) const {
  return standard_normal(rng, variance_.size()).cwiseProduct(variance_.cwiseSqrt());
}

double DiagLayerPosterior::quad_form(const Eigen::Ref<const Vector>& j) const {
  if (j.size() != variance_.size()) throw ContractViolation("quad_form: wrong length");
  return j.cwiseAbs2().dot(variance_);
}

EigenLayerPosterior::EigenLayerPosterior(Matrix u_a, Matrix u_g, Vector variance)
    : u_a_(std::move(u_a)), u_g_(std::move(u_g)), variance_(std::move(variance)), stddev_(variance_.cwiseSqrt()) {
  if (variance_.size() != u_a_.cols() * u_g_.cols()) throw ContractViolation("EigenLayerPosterior: shape mismatch");
}

Vector EigenLayerPosterior::draw_offset(Rng& rng) const {
  const Vector x = standard_normal(rng, variance_.size());
  return kron_apply(u_a_, u_g_, x.cwiseProduct(stddev_), /*transpose=*/false);
}

double EigenLayerPosterior::quad_form(const Eigen::Ref<const Vector>& j) const {
  return kron_apply(u_a_, u_g_, j, /*transpose=*/true).cwiseAbs2().dot(variance_);
}

Vector EigenLayerPosterior::marginal_variance() const { return efb_diagonal(u_a_, u_g_, variance_); }

Vector InfLayerPosterior::draw_offset(Rng& rng) const {
  return apply_factor(state_, standard_normal(rng, static_cast<Eigen::Index>(state_.size())));
}

Vector scaled_precision(const KronEigenbasis& basis, const PosteriorConfig& config) {
  const double N = config.n_scale;
  const double tau = config.effective_tau();
  const auto n = static_cast<Eigen::Index>(basis.n());
  const auto m = static_cast<Eigen::Index>(basis.m());
  Vector p(n * m);
  switch (config.estimator) {
    case Estimator::diag: return N * basis.exact_diag.array() + tau;
    case Estimator::efb: return N * basis.lambda.array() + tau;
    case Estimator::kfac_exact:
      for (Eigen::Index b = 0; b < n; ++b)
        for (Eigen::Index z = 0; z < m; ++z) p(m * b + z) = N * basis.s_A(b) * basis.s_G(z) + tau;
      return p;
    case Estimator::kfac_ritter: {
      const double sn = std::sqrt(N), st = std::sqrt(tau);
      for (Eigen::Index b = 0; b < n; ++b)
        for (Eigen::Index z = 0; z < m; ++z) p(m * b + z) = (sn * basis.s_A(b) + st) * (sn * basis.s_G(z) + st);
      return p;
    }
    case Estimator::inf: break;
  }
  throw ContractViolation("scaled_precision: the inf family uses scale_inf");
}

Vector precision_to_variance(const Vector& precision, const PosteriorConfig& config, std::size_t* degenerate) {
  Vector var(precision.size());
  std::size_t count = 0;
  for (Eigen::Index i = 0; i < precision.size(); ++i) {
    const double p = precision(i);
    if (p > config.eps) {
      var(i) = 1.0 / p;
      continue;
    }
    ++count;
    var(i) = config.policy == DegeneratePolicy::deterministic_dims ? 0.0 : 1.0 / config.eps;
  }
  if (degenerate) *degenerate = count;
  return var;
}

ScaledInfoForm scale_inf(const KronEigenbasis& basis, const PosteriorConfig& config) {
  const double N = config.n_scale;
  const double tau = config.effective_tau();
  ScaledInfoForm out;
  const std::size_t K = config.rank.resolve(basis.size());
  out.validity = check_validity(sparsify_layer(basis, K), config.eps);
  SparseInfoForm& f = out.form;
  f = out.validity.form;
  f.lambda_L *= N;
  f.D = (N * f.D.array() + tau).matrix();

  // Eigenvalues far below rounding of the largest contribute nothing and only
  // spoil the conditioning of the L x L gram.
  const double lmax = f.lambda_L.size() ? f.lambda_L.maxCoeff() : 0.0;
  std::vector<std::size_t> kept;
  for (std::size_t p : f.active) {
    if (f.lambda_L(static_cast<Eigen::Index>(p)) > 1e-14 * lmax) kept.push_back(p);
  }
  f.active = std::move(kept);

  for (Eigen::Index i = 0; i < f.D.size(); ++i) {
    if (N * basis.exact_diag(i) + tau > config.eps) continue;
    if (config.policy == DegeneratePolicy::deterministic_dims) {
      f.D(i) = std::numeric_limits<double>::infinity();
      ++out.deterministic;
    } else {
      f.D(i) = std::max(f.D(i), config.eps);
    }
  }
  return out;
}

std::unique_ptr<LayerPosterior> build_layer_posterior(const KronEigenbasis& basis, const Vector& theta_map,
                                                      const PosteriorConfig& config, LayerReport* report) {
  config.validate();
  if (static_cast<std::size_t>(theta_map.size()) != basis.size()) {
    throw ContractViolation("build_layer_posterior: theta_MAP length does not match the layer");
  }
  LayerReport r;
  r.N = basis.size();
  std::unique_ptr<LayerPosterior> out;
  if (config.estimator == Estimator::inf) {
    ScaledInfoForm s = scale_inf(basis, config);
    r.K = s.form.K_requested;
    r.L = s.form.L();
    r.over_budget = config.rank_budget && r.L > *config.rank_budget;
    r.verdict = s.validity.verdict;
    r.deterministic = s.deterministic;
    r.clipped = s.validity.clipped_d;
    SamplerState state = build_sampler(s.form, theta_map);
    r.form_hash = state.form_hash;
    r.theta_hash = state.theta_hash;
    out = std::make_unique<InfLayerPosterior>(std::move(state));
  } else {
    const Vector precision = scaled_precision(basis, config);
    std::size_t degenerate = 0;
    Vector var = precision_to_variance(precision, config, &degenerate);
    if (config.policy == DegeneratePolicy::deterministic_dims) {
      r.deterministic = degenerate;
    } else {
      r.clipped = degenerate;
    }
    if (config.estimator == Estimator::diag) {
      out = std::make_unique<DiagLayerPosterior>(std::move(var));
    } else {
      out = std::make_unique<EigenLayerPosterior>(basis.U_A, basis.U_G, std::move(var));
    }
    Sha256 h;
    h.update(precision);
    r.form_hash = h.hex();
    Sha256 th;
    th.update(theta_map);
    r.theta_hash = th.hex();
  }
  if (report) *report = r;
  return out;
}

std::vector<LayerFactorBatch> capture_factors(const NetworkSpec& spec, const Weights& map, const Dataset& data,
                                              LabelMode mode, std::uint64_t seed) {
  Rng rng = make_stream(seed, {0x666973});
  return per_sample_factors(spec, map, data, mode, rng);
}

std::vector<KronEigenbasis> capture_eigenbases(const NetworkSpec& spec, const Weights& map, const Dataset& data,
                                               LabelMode mode, std::uint64_t seed) {
  std::vector<KronEigenbasis> out;
  for (const LayerFactorBatch& b : capture_factors(spec, map, data, mode, seed)) out.push_back(build_eigenbasis(b));
  return out;
}

double residual_std(const NetworkSpec& spec, const Weights& map, const Dataset& data) {
  if (data.classification || data.size() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto row = static_cast<Eigen::Index>(r);
    total += (predict(spec, map, data.x.row(row).transpose()) - data.y.row(row).transpose()).squaredNorm();
  }
  return std::sqrt(total / static_cast<double>(data.size() * spec.output_dim()));
}

Posterior build_posterior(const NetworkSpec& spec, const Weights& map, const std::vector<KronEigenbasis>& bases,
                          const PosteriorConfig& config, double sigma_alea) {
  validate_weights(spec, map);
  if (bases.size() != spec.num_layers()) throw ContractViolation("build_posterior: one eigenbasis per layer needed");
  Posterior post;
  post.spec = spec;
  post.map = map;
  post.config = config;
  post.sigma_alea = sigma_alea;
  for (std::size_t l = 0; l < bases.size(); ++l) {
    LayerReport r;
    post.layers.push_back(build_layer_posterior(bases[l], map.layer_vec(l), config, &r));
    post.reports.push_back(std::move(r));
  }
  return post;
}

Posterior build_posterior(const NetworkSpec& spec, const Weights& map, const Dataset& data,
                          const PosteriorConfig& config, std::uint64_t seed) {
  return build_posterior(spec, map, capture_eigenbases(spec, map, data, config.label_mode, seed), config,
                         residual_std(spec, map, data));
}

PredictiveSummary predict_mc(const Posterior& post, const Matrix& x, std::size_t k_mc, std::uint64_t seed) {
  if (k_mc < 1) throw ContractViolation("predict_mc: K_mc must be at least 1");
  if (static_cast<std::size_t>(x.cols()) != post.spec.input_dim()) {
    throw ContractViolation("predict_mc: input dimension mismatch");
  }
  const bool classify = post.spec.loss == Loss::cross_entropy;
  const auto rows = x.rows();
  const auto outs = static_cast<Eigen::Index>(post.spec.output_dim());
  Matrix mean = Matrix::Zero(rows, outs);
  Matrix m2 = Matrix::Zero(rows, outs);
  for (std::size_t t = 0; t < k_mc; ++t) {
    Weights w = post.map;
    for (std::size_t l = 0; l < post.layers.size(); ++l) {
      Rng rng = make_stream(seed, {t, l});
      w.set_layer_vec(l, post.map.layer_vec(l) + post.layers[l]->draw_offset(rng));
    }
    const double k = static_cast<double>(t + 1);
    for (Eigen::Index r = 0; r < rows; ++r) {
      Vector y = predict(post.spec, w, x.row(r).transpose());
      if (classify) y = softmax(y);
      const Vector delta = y - mean.row(r).transpose();
      mean.row(r) += (delta / k).transpose();
      m2.row(r) += delta.cwiseProduct(y - mean.row(r).transpose()).transpose();
    }
  }
  PredictiveSummary s;
  s.mean = std::move(mean);
  if (!classify) {
    s.variance = (m2 / static_cast<double>(k_mc)).array() + post.sigma_alea * post.sigma_alea;
  }
  return s;
}

PredictiveSummary predict_linearized(const Posterior& post, const Matrix& x, double sigma_alea) {
  if (static_cast<std::size_t>(x.cols()) != post.spec.input_dim()) {
    throw ContractViolation("predict_linearized: input dimension mismatch");
  }
  const auto rows = x.rows();
  const auto outs = static_cast<Eigen::Index>(post.spec.output_dim());
  PredictiveSummary s;
  s.mean.resize(rows, outs);
  s.variance.resize(rows, outs);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Vector xr = x.row(r).transpose();
    s.mean.row(r) = predict(post.spec, post.map, xr).transpose();
    for (Eigen::Index k = 0; k < outs; ++k) {
      const std::vector<Vector> jac = output_jacobian(post.spec, post.map, xr, static_cast<std::size_t>(k));
      double var = sigma_alea * sigma_alea;
      for (std::size_t l = 0; l < jac.size(); ++l) var += post.layers[l]->quad_form(jac[l]);
      s.variance(r, k) = var;
    }
  }
  return s;
}

std::size_t acquire(const Posterior& post, const Matrix& pool) {
  if (pool.rows() == 0) throw ContractViolation("acquire: empty pool");
  const Vector score = predict_linearized(post, pool, post.sigma_alea).variance.rowwise().sum();
  std::size_t best = 0;
  for (Eigen::Index i = 1; i < score.size(); ++i) {
    if (score(i) > score(static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(i);
  }
  return best;
}

}  // namespace sparseinf
