// SPDX-License-Identifier: Apache-2.0

#include "sparseinf/sparseinf.h"

#include "sparseinf/errors.hpp"
#include "sparseinf/experiment.hpp"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>

using namespace sparseinf;

struct sinf_dataset {
  Dataset data;
};

struct sinf_model {
  Checkpoint ckpt;
};

struct sinf_posterior {
  PosteriorFile file;
  Posterior post;
};

namespace {

thread_local std::string last_error;

template <class F>
sinf_status guard(F&& f) {
  try {
    last_error.clear();
    return f();
  } catch (const PositiveDefinitenessViolation& e) {
    last_error = e.what();
    return SINF_ERR_NOT_PD;
  } catch (const ContractViolation& e) {
    last_error = e.what();
    return SINF_ERR_CONTRACT;
  } catch (const ConvergenceFailure& e) {
    last_error = e.what();
    return SINF_ERR_CONVERGENCE;
  } catch (const TrainingFailure& e) {
    last_error = e.what();
    return SINF_ERR_TRAINING;
  } catch (const NumericFailure& e) {
    last_error = e.what();
    return SINF_ERR_NUMERIC;
  } catch (const IoError& e) {
    last_error = e.what();
    return SINF_ERR_IO;
  } catch (const nlohmann::json::exception& e) {
    last_error = std::string("invalid JSON: ") + e.what();
    return SINF_ERR_CONTRACT;
  } catch (const std::exception& e) {
    last_error = e.what();
    return SINF_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown error";
    return SINF_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (!p) throw ContractViolation(std::string(what) + " must not be NULL");
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

Json parse(const char* text) {
  if (!text || !*text) return Json::object();
  return Json::parse(text);
}

Matrix rows_from(const double* x, size_t rows, size_t cols) {
  if (rows) need(x, "x");
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  return Eigen::Map<const RowMajor>(x, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void rows_to(const Matrix& m, double* out) {
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<RowMajor>(out, m.rows(), m.cols()) = m;
}

Posterior make_posterior(const PosteriorFile& f) { return rebuild_posterior(f); }

}  // namespace

extern "C" {

const char* sinf_last_error(void) { return last_error.c_str(); }

const char* sinf_version(void) { return "1.0.0"; }

void sinf_string_free(char* s) { std::free(s); }

sinf_status sinf_dataset_toy(uint64_t seed, size_t n_points, sinf_dataset** out) {
  return guard([&] {
    need(out, "out");
    *out = new sinf_dataset{make_toy_cubic(seed, n_points)};
    return SINF_OK;
  });
}

sinf_status sinf_dataset_load(const char* csv_path, sinf_dataset** out) {
  return guard([&] {
    need(csv_path, "csv_path");
    need(out, "out");
    *out = new sinf_dataset{load_dataset(csv_path)};
    return SINF_OK;
  });
}

sinf_status sinf_dataset_save(const sinf_dataset* d, const char* csv_path) {
  return guard([&] {
    need(d, "dataset");
    need(csv_path, "csv_path");
    save_dataset(csv_path, d->data);
    return SINF_OK;
  });
}

sinf_status sinf_dataset_shape(const sinf_dataset* d, size_t* rows, size_t* cols, int* classification) {
  return guard([&] {
    need(d, "dataset");
    if (rows) *rows = d->data.size();
    if (cols) *cols = d->data.input_dim();
    if (classification) *classification = d->data.classification ? 1 : 0;
    return SINF_OK;
  });
}

sinf_status sinf_dataset_inputs(const sinf_dataset* d, double* out) {
  return guard([&] {
    need(d, "dataset");
    if (d->data.size()) need(out, "out");
    rows_to(d->data.x, out);
    return SINF_OK;
  });
}

sinf_status sinf_dataset_targets(const sinf_dataset* d, size_t* outputs, double* y, int* labels) {
  return guard([&] {
    need(d, "dataset");
    if (outputs) *outputs = d->data.classification ? 1 : static_cast<size_t>(d->data.y.cols());
    if (y && !d->data.classification) rows_to(d->data.y, y);
    if (labels && d->data.classification) std::copy(d->data.labels.begin(), d->data.labels.end(), labels);
    return SINF_OK;
  });
}

void sinf_dataset_free(sinf_dataset* d) { delete d; }

sinf_status sinf_model_train(const char* config_json, const sinf_dataset* data, sinf_model** out) {
  return guard([&] {
    need(data, "dataset");
    need(out, "out");
    const Json j = parse(config_json);
    const std::uint64_t seed = j.value("seed", std::uint64_t{0});
    NetworkSpec spec = j.contains("spec") ? network_spec_from_json(j["spec"]) : toy_spec();
    Json t = to_json(toy_train_config(seed));
    if (j.contains("train")) t.update(j["train"]);
    if (!j.contains("train") || !j["train"].contains("seed")) t["seed"] = seed;
    const TrainConfig tc = train_config_from_json(t);
    TrainResult r = train_map(spec, data->data, tc);
    *out = new sinf_model{Checkpoint{spec, tc, std::move(r.weights), std::move(r.loss_trace)}};
    return SINF_OK;
  });
}

sinf_status sinf_model_load(const char* path, sinf_model** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new sinf_model{checkpoint_from_json(read_json_file(path))};
    return SINF_OK;
  });
}

sinf_status sinf_model_save(const sinf_model* m, const char* path) {
  return guard([&] {
    need(m, "model");
    need(path, "path");
    write_json_file(path, to_json(m->ckpt));
    return SINF_OK;
  });
}

sinf_status sinf_model_dims(const sinf_model* m, size_t* input_dim, size_t* output_dim, size_t* num_params) {
  return guard([&] {
    need(m, "model");
    if (input_dim) *input_dim = m->ckpt.spec.input_dim();
    if (output_dim) *output_dim = m->ckpt.spec.output_dim();
    if (num_params) *num_params = m->ckpt.spec.num_params();
    return SINF_OK;
  });
}

sinf_status sinf_model_predict(const sinf_model* m, const double* x, size_t rows, double* out) {
  return guard([&] {
    need(m, "model");
    if (rows) need(out, "out");
    const Matrix in = rows_from(x, rows, m->ckpt.spec.input_dim());
    Matrix y(in.rows(), static_cast<Eigen::Index>(m->ckpt.spec.output_dim()));
    for (Eigen::Index r = 0; r < in.rows(); ++r) {
      y.row(r) = predict(m->ckpt.spec, m->ckpt.weights, in.row(r).transpose()).transpose();
    }
    rows_to(y, out);
    return SINF_OK;
  });
}

void sinf_model_free(sinf_model* m) { delete m; }

sinf_status sinf_posterior_build(const sinf_model* m, const sinf_dataset* data, const char* posterior_json,
                                 uint64_t seed, sinf_posterior** out) {
  return guard([&] {
    need(m, "model");
    need(data, "dataset");
    need(out, "out");
    PosteriorFile f;
    f.model = m->ckpt;
    f.config = posterior_config_from_json(parse(posterior_json));
    f.sigma_alea = residual_std(m->ckpt.spec, m->ckpt.weights, data->data);
    f.bases = capture_eigenbases(m->ckpt.spec, m->ckpt.weights, data->data, f.config.label_mode, seed);
    Posterior p = make_posterior(f);
    *out = new sinf_posterior{std::move(f), std::move(p)};
    return SINF_OK;
  });
}

sinf_status sinf_posterior_load(const char* path, sinf_posterior** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    PosteriorFile f = posterior_file_from_json(read_json_file(path));
    Posterior p = make_posterior(f);
    *out = new sinf_posterior{std::move(f), std::move(p)};
    return SINF_OK;
  });
}

sinf_status sinf_posterior_save(const sinf_posterior* p, const char* path) {
  return guard([&] {
    need(p, "posterior");
    need(path, "path");
    write_json_file(path, to_json(p->file));
    return SINF_OK;
  });
}

sinf_status sinf_posterior_report(const sinf_posterior* p, char** json) {
  return guard([&] {
    need(p, "posterior");
    need(json, "json");
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["kind"] = "posterior_report";
    j["config"] = to_json(p->post.config);
    j["sigma_alea"] = p->post.sigma_alea;
    Json layers = Json::array();
    for (const LayerReport& r : p->post.reports) layers.push_back(to_json(r));
    j["layers"] = layers;
    *json = dup(j.dump(2));
    return SINF_OK;
  });
}

sinf_status sinf_posterior_dims(const sinf_posterior* p, size_t* input_dim, size_t* output_dim, size_t* num_params) {
  return guard([&] {
    need(p, "posterior");
    if (input_dim) *input_dim = p->post.spec.input_dim();
    if (output_dim) *output_dim = p->post.spec.output_dim();
    if (num_params) *num_params = p->post.spec.num_params();
    return SINF_OK;
  });
}

sinf_status sinf_posterior_sample(const sinf_posterior* p, uint64_t seed, size_t count, double* out) {
  return guard([&] {
    need(p, "posterior");
    if (count) need(out, "out");
    const Posterior& post = p->post;
    const auto P = static_cast<Eigen::Index>(post.spec.num_params());
    Matrix draws(static_cast<Eigen::Index>(count), P);
    for (std::size_t t = 0; t < count; ++t) {
      Weights w = post.map;
      for (std::size_t l = 0; l < post.layers.size(); ++l) {
        Rng rng = make_stream(seed, {t, l});
        w.set_layer_vec(l, post.map.layer_vec(l) + post.layers[l]->draw_offset(rng));
      }
      draws.row(static_cast<Eigen::Index>(t)) = w.flatten().transpose();
    }
    rows_to(draws, out);
    return SINF_OK;
  });
}

sinf_status sinf_posterior_predict(const sinf_posterior* p, const double* x, size_t rows, int linearized,
                                   size_t k_mc, uint64_t seed, double* mean, double* variance) {
  return guard([&] {
    need(p, "posterior");
    if (rows) need(mean, "mean");
    const Matrix in = rows_from(x, rows, p->post.spec.input_dim());
    const PredictiveSummary s = linearized ? predict_linearized(p->post, in, p->post.sigma_alea)
                                           : predict_mc(p->post, in, k_mc, seed);
    rows_to(s.mean, mean);
    if (variance && s.variance.size()) rows_to(s.variance, variance);
    return SINF_OK;
  });
}

sinf_status sinf_posterior_acquire(const sinf_posterior* p, const double* pool, size_t rows, size_t* index) {
  return guard([&] {
    need(p, "posterior");
    need(index, "index");
    *index = acquire(p->post, rows_from(pool, rows, p->post.spec.input_dim()));
    return SINF_OK;
  });
}

void sinf_posterior_free(sinf_posterior* p) { delete p; }

sinf_status sinf_run_pipeline(const char* config_json, const char* out_dir, char** manifest_json) {
  return guard([&] {
    need(out_dir, "out_dir");
    ExperimentConfig c = experiment_config_from_json(parse(config_json));
    c.out_dir = out_dir;
    PipelineResult r = run_pipeline(c);
    if (manifest_json) *manifest_json = dup(r.manifest.dump(2));
    if (!r.ok) {
      last_error = "pipeline failed at stage " + r.manifest.value("failed_stage", std::string("?"));
      return SINF_ERR_CHECK_FAILED;
    }
    return SINF_OK;
  });
}

sinf_status sinf_verify_manifest(const char* manifest_path, char** mismatches_json) {
  return guard([&] {
    need(manifest_path, "manifest_path");
    const auto bad = verify_manifest(manifest_path);
    if (mismatches_json) *mismatches_json = dup(Json(bad).dump());
    if (!bad.empty()) {
      last_error = std::to_string(bad.size()) + " artifact(s) do not match the manifest";
      return SINF_ERR_CHECK_FAILED;
    }
    return SINF_OK;
  });
}

sinf_status sinf_sweep_rank(const char* config_json, const char* ranks, char** csv) {
  return guard([&] {
    need(csv, "csv");
    const ExperimentConfig c = experiment_config_from_json(parse(config_json));
    std::vector<RankSpec> specs;
    std::string list = ranks && *ranks ? ranks : "25%,50%,75%,100%";
    std::size_t start = 0;
    while (start <= list.size()) {
      const std::size_t comma = list.find(',', start);
      const std::string item = list.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      if (!item.empty()) specs.push_back(RankSpec::parse(item));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    *csv = dup(sweep_rank(c, specs).to_string());
    return SINF_OK;
  });
}

sinf_status sinf_sweep_hyper(const char* config_json, const char* sweep_json, char** csv) {
  return guard([&] {
    need(csv, "csv");
    const ExperimentConfig c = experiment_config_from_json(parse(config_json));
    const Json s = parse(sweep_json);
    HyperSweepConfig h;
    h.samples = s.value("samples", h.samples);
    h.n_lo = s.value("n_lo", h.n_lo);
    h.n_hi = s.value("n_hi", h.n_hi);
    h.tau_lo = s.value("tau_lo", h.tau_lo);
    h.tau_hi = s.value("tau_hi", h.tau_hi);
    *csv = dup(sweep_hyper(c, h).to_string());
    return SINF_OK;
  });
}

sinf_status sinf_active_learn(const char* al_json, uint64_t seed, char** csv) {
  return guard([&] {
    need(csv, "csv");
    const Json j = parse(al_json);
    ActiveLearnConfig c;
    c.iterations = j.value("iterations", c.iterations);
    c.initial_points = j.value("initial_points", c.initial_points);
    c.validation_points = j.value("validation_points", c.validation_points);
    c.test_points = j.value("test_points", c.test_points);
    c.pool_points = j.value("pool_points", c.pool_points);
    if (j.contains("acquisitions")) {
      c.acquisitions.clear();
      for (const auto& a : j["acquisitions"]) c.acquisitions.push_back(parse_acquisition(a.get<std::string>()));
    }
    if (j.contains("ranks")) {
      c.ranks.clear();
      for (const auto& r : j["ranks"]) c.ranks.push_back(RankSpec::parse(r.get<std::string>()));
    }
    if (j.contains("n_fractions")) c.n_fractions = j["n_fractions"].get<std::vector<double>>();
    if (j.contains("taus")) c.taus = j["taus"].get<std::vector<double>>();
    if (j.contains("train")) {
      Json t = to_json(c.train);
      t.update(j["train"]);
      c.train = train_config_from_json(t);
    }
    *csv = dup(active_learn(seed, c).to_string());
    return SINF_OK;
  });
}

sinf_status sinf_verify(const char* verify_json, char** report_json) {
  return guard([&] {
    const Json j = parse(verify_json);
    LemmaConfig c;
    c.trials = j.value("trials", c.trials);
    c.seed = j.value("seed", c.seed);
    c.max_width = j.value("max_width", c.max_width);
    c.max_layers = j.value("max_layers", c.max_layers);
    c.min_batch = j.value("min_batch", c.min_batch);
    c.max_batch = j.value("max_batch", c.max_batch);
    c.inject_fault = j.value("inject_fault", false);
    const LemmaReport r = verify_lemmas(c);
    if (report_json) *report_json = dup(to_json(r));
    if (!r.all_passed()) {
      last_error = "theorem check failed: " + (r.failures.empty() ? std::string("?") : r.failures.front());
      return SINF_ERR_CHECK_FAILED;
    }
    return SINF_OK;
  });
}

}  // extern "C"
