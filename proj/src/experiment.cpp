// SPDX-License-Identifier: Apache-2.0

#include "sparseinf/experiment.hpp"

#include "sparseinf/errors.hpp"
#include "sparseinf/hash.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace fs = std::filesystem;

namespace sparseinf {

NetworkSpec toy_spec() {
  NetworkSpec s;
  s.layer_sizes = {1, 7, 1};
  s.activation = Activation::relu;
  s.loss = Loss::mse;
  return s;
}

TrainConfig toy_train_config(std::uint64_t seed) {
  TrainConfig c;
  c.optimizer = Optimizer::adam;
  c.learning_rate = 1e-3;
  c.epochs = 2000;
  c.batch_size = 10;
  c.seed = seed;
  return c;
}

void ExperimentConfig::validate() const {
  spec.validate();
  posterior.validate();
  if (!data_csv && spec.input_dim() != 1) throw ContractViolation("the toy dataset has one input");
  if (!data_csv && (spec.output_dim() != 1 || spec.loss != Loss::mse)) {
    throw ContractViolation("the toy dataset is scalar regression");
  }
  if (grid_points < 2 || !(grid_hi > grid_lo)) throw ContractViolation("prediction grid needs >= 2 points on lo < hi");
}

Json to_json(const ExperimentConfig& c) {
  Json j;
  if (c.data_csv) {
    j["data_csv"] = c.data_csv->string();
  } else {
    j["data_csv"] = nullptr;
  }
  j["toy_points"] = c.toy_points;
  j["test_points"] = c.test_points;
  j["spec"] = to_json(c.spec);
  j["train"] = to_json(c.train);
  j["posterior"] = to_json(c.posterior);
  j["seed"] = c.seed;
  j["grid"] = {{"lo", c.grid_lo}, {"hi", c.grid_hi}, {"points", c.grid_points}};
  return j;
}

ExperimentConfig experiment_config_from_json(const Json& j) {
  ExperimentConfig c;
  if (j.contains("data_csv") && !j["data_csv"].is_null()) c.data_csv = j["data_csv"].get<std::string>();
  c.toy_points = j.value("toy_points", c.toy_points);
  c.test_points = j.value("test_points", c.test_points);
  if (j.contains("spec")) c.spec = network_spec_from_json(j["spec"]);
  c.seed = j.value("seed", c.seed);
  c.train = toy_train_config(c.seed);
  if (j.contains("train")) {
    Json t = to_json(c.train);
    t.update(j["train"]);
    c.train = train_config_from_json(t);
  }
  if (j.contains("posterior")) c.posterior = posterior_config_from_json(j["posterior"]);
  if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
  if (j.contains("grid")) {
    c.grid_lo = j["grid"].value("lo", c.grid_lo);
    c.grid_hi = j["grid"].value("hi", c.grid_hi);
    c.grid_points = j["grid"].value("points", c.grid_points);
  }
  c.validate();
  return c;
}

DataSplit load_data(const ExperimentConfig& c) {
  DataSplit s;
  if (c.data_csv) {
    s.train = load_dataset(*c.data_csv);
    s.test = s.train;
  } else {
    s.train = make_toy_cubic(c.seed, c.toy_points);
    Rng rng = make_stream(c.seed, {0x74657374});
    s.test = make_toy_cubic(rng, c.test_points, -4.0, 4.0);
  }
  if (s.train.size() == 0) throw ContractViolation("empty training set");
  if (s.train.input_dim() != c.spec.input_dim()) throw ContractViolation("dataset input dimension differs from the network");
  if (s.train.classification != (c.spec.loss == Loss::cross_entropy)) {
    throw ContractViolation("dataset kind does not match the loss");
  }
  return s;
}

namespace {

Matrix grid_inputs(double lo, double hi, std::size_t n) {
  Matrix x(static_cast<Eigen::Index>(n), 1);
  for (std::size_t i = 0; i < n; ++i) {
    x(static_cast<Eigen::Index>(i), 0) = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  return x;
}

double mean_std(const Posterior& post, const Matrix& x) {
  return predict_linearized(post, x, post.sigma_alea).variance.array().sqrt().mean();
}

Matrix predict_map(const NetworkSpec& spec, const Weights& w, const Matrix& x) {
  Matrix out(x.rows(), static_cast<Eigen::Index>(spec.output_dim()));
  for (Eigen::Index r = 0; r < x.rows(); ++r) out.row(r) = predict(spec, w, x.row(r).transpose()).transpose();
  return out;
}

// Dense estimate of one layer's information matrix without hyperparameters.
Matrix dense_estimate(const KronEigenbasis& b, Estimator e, std::size_t K) {
  switch (e) {
    case Estimator::diag: return b.exact_diag.asDiagonal();
    case Estimator::kfac_ritter:
    case Estimator::kfac_exact:
      return kron_materialize(b.U_A * b.s_A.asDiagonal() * b.U_A.transpose(),
                              b.U_G * b.s_G.asDiagonal() * b.U_G.transpose());
    case Estimator::efb: return materialize_efb(b.U_A, b.U_G, b.lambda);
    case Estimator::inf: return materialize_inf(sparsify_layer(b, K));
  }
  return {};
}

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace

double uncertainty_ratio(const Posterior& post) {
  if (post.spec.input_dim() != 1 || post.spec.loss != Loss::mse) {
    throw ContractViolation("uncertainty_ratio: 1-D regression only");
  }
  const Matrix inner = grid_inputs(-3.0, 3.0, 121);
  Matrix outer(42, 1);
  outer.topRows(21) = grid_inputs(-6.0, -5.0, 21);
  outer.bottomRows(21) = grid_inputs(5.0, 6.0, 21);
  return mean_std(post, outer) / mean_std(post, inner);
}

PipelineResult run_pipeline(const ExperimentConfig& config) {
  PipelineResult result;
  Manifest manifest("run", config.seed);
  const fs::path dir = config.out_dir;
  std::string current = "config";
  try {
    config.validate();
    manifest.set("config", to_json(config));

    current = "data";
    const DataSplit data = load_data(config);
    save_dataset(dir / "dataset.csv", data.train);
    manifest.add_artifact(dir, "dataset.csv");
    manifest.stage(current)["rows"] = data.train.size();

    current = "train";
    TrainResult trained = train_map(config.spec, data.train, config.train);
    Checkpoint ckpt{config.spec, config.train, trained.weights, trained.loss_trace};
    write_json_file(dir / "checkpoint.json", to_json(ckpt));
    manifest.add_artifact(dir, "checkpoint.json");
    {
      Json& s = manifest.stage(current);
      s["initial_loss"] = trained.loss_trace.front();
      s["final_loss"] = trained.loss_trace.back();
      s["weights_hash"] = sha256_hex(to_json(ckpt)["weights"].dump());
    }

    current = "capture";
    const auto batches = capture_factors(config.spec, trained.weights, data.train, config.posterior.label_mode, config.seed);
    manifest.stage(current)["samples"] = batches.front().count();

    current = "estimator";
    std::vector<KronEigenbasis> bases;
    for (const LayerFactorBatch& b : batches) bases.push_back(build_eigenbasis(b));
    {
      Json& s = manifest.stage(current);
      s["estimator"] = to_string(config.posterior.estimator);
      Json hashes = Json::array();
      for (const KronEigenbasis& b : bases) hashes.push_back(sha256_hex(to_json(b).dump()));
      s["eigenbasis_hashes"] = hashes;
    }

    const bool inf = config.posterior.estimator == Estimator::inf;
    current = inf ? "sparsify" : "posterior";
    const double sigma = residual_std(config.spec, trained.weights, data.train);
    Posterior post = build_posterior(config.spec, trained.weights, bases, config.posterior, sigma);
    Json layers = Json::array();
    for (const LayerReport& r : post.reports) layers.push_back(to_json(r));
    manifest.set("layers", layers);
    if (inf) {
      Json& sp = manifest.stage("sparsify");
      Json ranks = Json::array();
      for (const LayerReport& r : post.reports) ranks.push_back({{"N", r.N}, {"K", r.K}, {"L", r.L}});
      sp["rank"] = config.posterior.rank.to_string();
      sp["layers"] = ranks;
      Json& va = manifest.stage("validity");
      Json verdicts = Json::array();
      for (const LayerReport& r : post.reports) {
        verdicts.push_back({{"verdict", to_string(*r.verdict)}, {"clipped", r.clipped}, {"deterministic_dims", r.deterministic}});
      }
      va["layers"] = verdicts;
      Json& sa = manifest.stage("sampler");
      Json hashes = Json::array();
      for (const LayerReport& r : post.reports) hashes.push_back({{"form_hash", r.form_hash}, {"theta_hash", r.theta_hash}});
      sa["layers"] = hashes;
    } else {
      manifest.stage("posterior");
    }
    PosteriorFile pf{ckpt, config.posterior, sigma, bases};
    write_json_file(dir / "posterior.json", to_json(pf));
    manifest.add_artifact(dir, "posterior.json");

    current = "predict";
    const bool regression = config.spec.loss == Loss::mse;
    const bool grid = regression && config.spec.input_dim() == 1;
    const Matrix x = grid ? grid_inputs(config.grid_lo, config.grid_hi, config.grid_points) : data.test.x;
    const PredictiveSummary mc = predict_mc(post, x, config.posterior.k_mc, mix64(config.seed ^ 0x6d63));
    CsvTable pred;
    pred.header.push_back("id");
    for (Eigen::Index c = 0; c < x.cols(); ++c) pred.header.push_back("x_" + std::to_string(c));
    const auto outs = static_cast<Eigen::Index>(config.spec.output_dim());
    PredictiveSummary lin;
    if (regression) {
      lin = predict_linearized(post, x, sigma);
      for (Eigen::Index k = 0; k < outs; ++k) {
        for (const char* col : {"mean_", "std_", "mc_mean_", "mc_std_"}) pred.header.push_back(col + std::to_string(k));
      }
    } else {
      for (Eigen::Index k = 0; k < outs; ++k) pred.header.push_back("p_" + std::to_string(k));
    }
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      std::vector<std::string> row{std::to_string(r)};
      for (Eigen::Index c = 0; c < x.cols(); ++c) row.push_back(format_double(x(r, c)));
      for (Eigen::Index k = 0; k < outs; ++k) {
        if (regression) {
          row.push_back(format_double(lin.mean(r, k)));
          row.push_back(format_double(std::sqrt(lin.variance(r, k))));
          row.push_back(format_double(mc.mean(r, k)));
          row.push_back(format_double(std::sqrt(mc.variance(r, k))));
        } else {
          row.push_back(format_double(mc.mean(r, k)));
        }
      }
      pred.add_row(std::move(row));
    }
    write_text_file(dir / "predictions.csv", pred.to_string());
    manifest.add_artifact(dir, "predictions.csv");
    manifest.stage(current)["rows"] = x.rows();

    current = "metrics";
    Json metrics;
    metrics["schema_version"] = kSchemaVersion;
    metrics["kind"] = "metrics";
    metrics["sigma_alea"] = sigma;
    if (regression) {
      const PredictiveSummary tl = predict_linearized(post, data.test.x, sigma);
      const RegressionMetrics m = regression_metrics(tl.mean, data.test.y, tl.variance);
      metrics["test_rmse"] = m.rmse;
      metrics["test_log_likelihood"] = m.log_likelihood;
      const PredictiveSummary tm = predict_mc(post, data.test.x, config.posterior.k_mc, mix64(config.seed ^ 0x746d));
      const RegressionMetrics mm = regression_metrics(tm.mean, data.test.y, tm.variance.array().max(1e-300).matrix());
      metrics["test_rmse_mc"] = mm.rmse;
      metrics["test_log_likelihood_mc"] = mm.log_likelihood;
      if (config.spec.input_dim() == 1) metrics["uncertainty_ratio"] = uncertainty_ratio(post);
    } else {
      const PredictiveSummary tm = predict_mc(post, data.test.x, config.posterior.k_mc, mix64(config.seed ^ 0x746d));
      std::size_t right = 0;
      for (Eigen::Index r = 0; r < tm.mean.rows(); ++r) {
        Eigen::Index arg = 0;
        tm.mean.row(r).maxCoeff(&arg);
        right += arg == data.test.labels[static_cast<std::size_t>(r)];
      }
      metrics["test_accuracy"] = static_cast<double>(right) / static_cast<double>(tm.mean.rows());
      metrics["ece"] = optional_json(ece(tm.mean, data.test.labels));
      const Vector ent = normalized_entropy_rows(tm.mean);
      metrics["mean_normalized_entropy"] = ent.mean();
      CsvTable bins;
      bins.header = {"lo", "hi", "count", "accuracy", "confidence"};
      for (const CalibrationBin& b : calibration_bins(tm.mean, data.test.labels)) {
        bins.add_row({format_double(b.lo), format_double(b.hi), std::to_string(b.count), format_double(b.accuracy),
                      format_double(b.confidence)});
      }
      write_text_file(dir / "calibration.csv", bins.to_string());
      manifest.add_artifact(dir, "calibration.csv");
      constexpr int kEntropyBins = 10;
      std::vector<std::size_t> hist(kEntropyBins, 0);
      for (Eigen::Index r = 0; r < ent.size(); ++r) {
        ++hist[static_cast<std::size_t>(std::clamp(static_cast<int>(ent(r) * kEntropyBins), 0, kEntropyBins - 1))];
      }
      CsvTable eh;
      eh.header = {"lo", "hi", "count"};
      for (int b = 0; b < kEntropyBins; ++b) {
        eh.add_row({format_double(static_cast<double>(b) / kEntropyBins),
                    format_double(static_cast<double>(b + 1) / kEntropyBins), std::to_string(hist[b])});
      }
      write_text_file(dir / "entropy_histogram.csv", eh.to_string());
      manifest.add_artifact(dir, "entropy_histogram.csv");
    }
    Json frob = Json::array();
    for (std::size_t l = 0; l < batches.size(); ++l) {
      if (bases[l].size() > kDefaultExactBlockCap) continue;
      const Matrix exact = exact_block_im(batches[l]).matrix;
      const std::size_t K = config.posterior.rank.resolve(bases[l].size());
      const FrobeniusReport fr = frobenius_errors(exact, dense_estimate(bases[l], config.posterior.estimator, K),
                                                  to_string(config.posterior.estimator),
                                                  static_cast<double>(K) / static_cast<double>(bases[l].size()));
      frob.push_back({{"layer", l}, {"diag_err", optional_json(fr.diag_err)}, {"offdiag_err", optional_json(fr.offdiag_err)}});
    }
    metrics["frobenius"] = frob;
    write_json_file(dir / "metrics.json", metrics);
    manifest.add_artifact(dir, "metrics.json");
    manifest.stage(current);
    result.metrics = metrics;
    result.ok = true;
  } catch (const std::exception& e) {
    manifest.fail(current, e.what());
  }
  try {
    manifest.write(dir);
  } catch (const std::exception& e) {
    result.ok = false;
    manifest.fail("manifest", e.what());
  }
  result.manifest = manifest.json();
  return result;
}

CsvTable sweep_rank(const ExperimentConfig& config, const std::vector<RankSpec>& ranks) {
  config.validate();
  const DataSplit data = load_data(config);
  const Weights w = train_map(config.spec, data.train, config.train).weights;
  const auto batches = capture_factors(config.spec, w, data.train, config.posterior.label_mode, config.seed);
  CsvTable t;
  t.header = {"layer", "estimator", "rank", "K", "L", "N", "diag_err", "offdiag_err"};
  auto cell = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("undefined"); };
  for (std::size_t l = 0; l < batches.size(); ++l) {
    const Matrix exact = exact_block_im(batches[l]).matrix;
    const KronEigenbasis b = build_eigenbasis(batches[l]);
    const std::size_t N = b.size();
    auto emit = [&](const std::string& name, const std::string& rank, std::size_t K, std::size_t L, const Matrix& est) {
      const FrobeniusReport r = frobenius_errors(exact, est);
      t.add_row({std::to_string(l), name, rank, std::to_string(K), std::to_string(L), std::to_string(N),
                 cell(r.diag_err), cell(r.offdiag_err)});
    };
    emit("diag", "full", N, N, dense_estimate(b, Estimator::diag, N));
    emit("kfac", "full", N, N, dense_estimate(b, Estimator::kfac_exact, N));
    emit("efb", "full", N, N, dense_estimate(b, Estimator::efb, N));
    for (const RankSpec& r : ranks) {
      const std::size_t K = r.resolve(N);
      const SparseInfoForm f = sparsify_layer(b, K);
      emit("inf", r.to_string(), K, f.L(), materialize_inf(f));
    }
  }
  return t;
}

CsvTable sweep_hyper(const ExperimentConfig& config, const HyperSweepConfig& sweep) {
  config.validate();
  if (!(sweep.n_lo > 0 && sweep.n_hi >= sweep.n_lo && sweep.tau_lo > 0 && sweep.tau_hi >= sweep.tau_lo)) {
    throw ContractViolation("sweep_hyper: ranges must be positive and ordered");
  }
  if (config.spec.loss != Loss::mse) throw ContractViolation("sweep_hyper: regression only");
  const DataSplit data = load_data(config);
  const Weights w = train_map(config.spec, data.train, config.train).weights;
  const auto bases = capture_eigenbases(config.spec, w, data.train, config.posterior.label_mode, config.seed);
  const double sigma = residual_std(config.spec, w, data.train);
  Rng rng = make_stream(config.seed, {0x6879706572});
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto log_uniform = [&](double lo, double hi) { return std::exp(std::log(lo) + u(rng) * (std::log(hi) - std::log(lo))); };
  CsvTable t;
  t.header = {"N_scale", "tau", "rmse", "log_likelihood", "mean_std"};
  for (std::size_t s = 0; s < sweep.samples; ++s) {
    PosteriorConfig pc = config.posterior;
    pc.n_scale = log_uniform(sweep.n_lo, sweep.n_hi);
    pc.tau = log_uniform(sweep.tau_lo, sweep.tau_hi);
    const Posterior post = build_posterior(config.spec, w, bases, pc, sigma);
    const PredictiveSummary p = predict_linearized(post, data.test.x, sigma);
    const RegressionMetrics m = regression_metrics(p.mean, data.test.y, p.variance);
    t.add_row({format_double(pc.n_scale), format_double(*pc.tau), format_double(m.rmse), format_double(m.log_likelihood),
               format_double(p.variance.array().sqrt().mean())});
  }
  return t;
}

std::string to_string(Acquisition a) { return a == Acquisition::random ? "random" : "variance"; }

Acquisition parse_acquisition(std::string_view name) {
  if (name == "variance") return Acquisition::variance;
  if (name == "random") return Acquisition::random;
  throw ContractViolation("unknown acquisition '" + std::string(name) + "'");
}

TrainConfig al_train_config() {
  TrainConfig c;
  c.optimizer = Optimizer::adam;
  c.learning_rate = 1e-2;
  c.epochs = 40;
  c.batch_size = 20;
  return c;
}

namespace {

double rmse(const NetworkSpec& spec, const Weights& w, const Dataset& d) {
  return std::sqrt((predict_map(spec, w, d.x) - d.y).array().square().mean());
}

Weights train_early_stopped(const NetworkSpec& spec, const Dataset& train, const Dataset& val, TrainConfig tc) {
  Weights best;
  double best_rmse = std::numeric_limits<double>::infinity();
  tc.on_epoch = [&](std::size_t, const Weights& w) {
    const double r = rmse(spec, w, val);
    if (r < best_rmse) {
      best_rmse = r;
      best = w;
    }
  };
  Weights last = train_map(spec, train, tc).weights;
  return best.layers.empty() ? last : best;
}

}  // namespace

CsvTable active_learn(std::uint64_t seed, const ActiveLearnConfig& config) {
  if (config.initial_points < 1 || config.test_points < 1 || config.validation_points < 1) {
    throw ContractViolation("active_learn: empty split");
  }
  if (config.n_fractions.empty() || config.taus.empty()) throw ContractViolation("active_learn: empty (N, tau) grid");
  const NetworkSpec spec = toy_spec();
  Rng data_rng = make_stream(seed, {0x616c});
  const Dataset initial = make_toy_cubic(data_rng, config.initial_points, -4.0, 4.0);
  const Dataset val = make_toy_cubic(data_rng, config.validation_points, -4.0, 4.0);
  const Dataset test = make_toy_cubic(data_rng, config.test_points, -4.0, 4.0);
  const Dataset pool0 = make_toy_cubic(data_rng, config.pool_points, -4.0, 4.0);
  TrainConfig tc = config.train;
  tc.seed = seed;

  CsvTable t;
  t.header = {"seed", "acquisition", "rank", "iteration", "n_train", "test_rmse", "N_scale", "tau", "status"};
  auto run = [&](Acquisition acq, const std::string& rank_label, const RankSpec& rank) {
    Dataset train = initial;
    std::vector<std::size_t> pool(pool0.size());
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    Rng pick = make_stream(seed, {0x726e64});
    std::string n_used = "-", tau_used = "-";
    for (std::size_t it = 0; it <= config.iterations; ++it) {
      const Weights w = train_early_stopped(spec, train, val, tc);
      t.add_row({std::to_string(seed), to_string(acq), rank_label, std::to_string(it), std::to_string(train.size()),
                 format_double(rmse(spec, w, test)), n_used, tau_used, "ok"});
      if (it == config.iterations) break;
      if (pool.empty()) {
        t.add_row({std::to_string(seed), to_string(acq), rank_label, std::to_string(it + 1), std::to_string(train.size()),
                   "nan", "-", "-", "pool_exhausted"});
        break;
      }
      std::size_t chosen = 0;
      if (acq == Acquisition::random) {
        chosen = std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(pick);
      } else {
        const auto bases = capture_eigenbases(spec, w, train, LabelMode::model_sampled, mix64(seed + it));
        const double sigma = residual_std(spec, w, train);
        std::optional<Posterior> best;
        double best_ll = -std::numeric_limits<double>::infinity();
        for (double frac : config.n_fractions) {
          for (double tau : config.taus) {
            PosteriorConfig pc;
            pc.estimator = Estimator::inf;
            pc.rank = rank;
            pc.n_scale = frac * static_cast<double>(train.size());
            pc.tau = tau;
            Posterior post = build_posterior(spec, w, bases, pc, sigma);
            const PredictiveSummary p = predict_linearized(post, val.x, sigma);
            const double ll = regression_metrics(p.mean, val.y, p.variance).log_likelihood;
            if (!best || ll > best_ll) {
              best_ll = ll;
              best = std::move(post);
            }
          }
        }
        n_used = format_double(best->config.n_scale);
        tau_used = format_double(best->config.effective_tau());
        chosen = acquire(*best, pool0.subset(pool).x);
      }
      train.append(pool0.subset({pool[chosen]}));
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(chosen));
    }
  };
  for (Acquisition acq : config.acquisitions) {
    if (acq == Acquisition::random) {
      run(acq, "-", RankSpec::full());
    } else {
      for (const RankSpec& r : config.ranks) run(acq, r.to_string(), r);
    }
  }
  return t;
}

}  // namespace sparseinf
