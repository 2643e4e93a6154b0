// SPDX-License-Identifier: Apache-2.0
//
// sparseinf-cli: dataset generation, training, posterior construction,
// sampling, prediction, sweeps, active learning and the theorem suite.

#include "sparseinf/sparseinf.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

constexpr const char* kOutDirEnv = "SPARSEINF_OUT_DIR";

struct Failure {
  int code;
};

void check(sinf_status s) {
  if (s != SINF_OK) {
    std::cerr << "error: " << sinf_last_error() << "\n";
    throw Failure{static_cast<int>(s)};
  }
}

// Owns a char* handed out by the library.
struct Owned {
  char* p = nullptr;
  ~Owned() { sinf_string_free(p); }
  std::string str() const { return p ? std::string(p) : std::string(); }
};

template <class T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  ~Handle() { Free(p); }
};
using DatasetH = Handle<sinf_dataset, sinf_dataset_free>;
using ModelH = Handle<sinf_model, sinf_model_free>;
using PosteriorH = Handle<sinf_posterior, sinf_posterior_free>;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Json read_json(const std::string& path) {
  if (path.empty()) return Json::object();
  std::ifstream in(path);
  if (!in) {
    std::cerr << "error: cannot read " << path << "\n";
    throw Failure{SINF_ERR_IO};
  }
  try {
    return Json::parse(in);
  } catch (const std::exception& e) {
    std::cerr << "error: " << path << ": " << e.what() << "\n";
    throw Failure{SINF_ERR_CONTRACT};
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) {
    std::cerr << "error: cannot write " << path.string() << "\n";
    throw Failure{SINF_ERR_IO};
  }
}

std::vector<std::size_t> parse_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoul(item));
  return out;
}

struct Common {
  std::uint64_t seed = 0;
  std::string out_dir;
  std::string output;

  fs::path out_path() const {
    fs::path o(output);
    if (o.is_absolute()) return o;
    std::string dir = out_dir;
    if (dir.empty()) {
      const char* env = std::getenv(kOutDirEnv);
      dir = env && *env ? env : ".";
    }
    return fs::path(dir) / o;
  }
};

void add_common(CLI::App* cmd, Common& c, const std::string& default_output) {
  c.output = default_output;
  cmd->add_option("--seed", c.seed, "Random seed")->required();
  cmd->add_option("--out-dir", c.out_dir, std::string("Output directory (default $") + kOutDirEnv + " or .)");
  cmd->add_option("--output", c.output, "Output file, relative to the output directory")->capture_default_str();
}

struct Matrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> data;
};

Matrix grid(double lo, double hi, std::size_t n) {
  Matrix m{n, 1, std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) m.data[i] = n == 1 ? lo : lo + (hi - lo) * double(i) / double(n - 1);
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse information form posteriors for small fully-connected networks"};
  app.require_subcommand(1);

  // gen-toy
  Common gt;
  std::size_t gt_points = 100;
  auto* gen = app.add_subcommand("gen-toy", "Write the cubic toy regression dataset as CSV");
  add_common(gen, gt, "dataset.csv");
  gen->add_option("--n-points", gt_points, "Number of points")->capture_default_str();

  // train
  Common tr;
  std::string tr_data, tr_config, tr_layers, tr_activation, tr_loss, tr_optimizer;
  double tr_lr = 0, tr_wd = -1;
  std::size_t tr_epochs = 0, tr_batch = 0;
  bool tr_batch_set = false;
  auto* train = app.add_subcommand("train", "Train a MAP network");
  add_common(train, tr, "checkpoint.json");
  train->add_option("--data", tr_data, "Dataset CSV")->required();
  train->add_option("--config", tr_config, "JSON with \"spec\" and \"train\" objects");
  train->add_option("--layers", tr_layers, "Layer sizes, e.g. 1,7,1");
  train->add_option("--activation", tr_activation, "relu | tanh | identity");
  train->add_option("--loss", tr_loss, "mse | cross_entropy");
  train->add_option("--optimizer", tr_optimizer, "adam | sgd");
  train->add_option("--learning-rate", tr_lr);
  train->add_option("--epochs", tr_epochs);
  auto* batch_opt = train->add_option("--batch-size", tr_batch, "0 = full batch");
  train->add_option("--weight-decay", tr_wd);

  // posterior
  Common po;
  std::string po_model, po_data, po_config, po_estimator, po_rank, po_policy, po_label_mode;
  double po_n = 0, po_tau = -1, po_eps = 0;
  std::size_t po_kmc = 0, po_budget = 0;
  auto* post = app.add_subcommand("posterior", "Build a layer-wise Gaussian posterior around a checkpoint");
  add_common(post, po, "posterior.json");
  post->add_option("--model", po_model, "Checkpoint JSON")->required();
  post->add_option("--data", po_data, "Training dataset CSV")->required();
  post->add_option("--config", po_config, "Posterior configuration JSON");
  post->add_option("--estimator", po_estimator, "diag | kfac_ritter | kfac_exact | efb | inf");
  post->add_option("--rank", po_rank, "full, a percentage (50%) or an eigenvalue count");
  post->add_option("--n-scale", po_n, "Pseudo-observation count N");
  post->add_option("--tau", po_tau, "Prior precision");
  post->add_option("--k-mc", po_kmc, "Monte Carlo draws for prediction");
  post->add_option("--degenerate-policy", po_policy, "deterministic_dims | clip");
  post->add_option("--label-mode", po_label_mode, "model_sampled | empirical");
  post->add_option("--eps", po_eps, "Clipping floor");
  post->add_option("--rank-budget", po_budget, "Largest L allowed per layer");

  // sample
  Common sa;
  std::string sa_posterior;
  std::size_t sa_count = 100;
  auto* sample = app.add_subcommand("sample", "Draw flattened parameter vectors");
  add_common(sample, sa, "samples.csv");
  sample->add_option("--posterior", sa_posterior, "Posterior JSON")->required();
  sample->add_option("--count", sa_count)->capture_default_str();

  // predict
  Common pr;
  std::string pr_posterior, pr_data, pr_method = "mc";
  double pr_lo = -6, pr_hi = 6;
  std::size_t pr_points = 241, pr_kmc = 100;
  auto* pred = app.add_subcommand("predict", "Predictive mean and variance on a dataset or an x-grid");
  add_common(pred, pr, "predictions.csv");
  pred->add_option("--posterior", pr_posterior, "Posterior JSON")->required();
  pred->add_option("--data", pr_data, "Inputs CSV; a 1-D grid is used when omitted");
  pred->add_option("--method", pr_method, "mc | linearized")->check(CLI::IsMember({"mc", "linearized"}))->capture_default_str();
  pred->add_option("--k-mc", pr_kmc)->capture_default_str();
  pred->add_option("--grid-lo", pr_lo)->capture_default_str();
  pred->add_option("--grid-hi", pr_hi)->capture_default_str();
  pred->add_option("--grid-points", pr_points)->capture_default_str();

  // sweep-rank
  Common sr;
  std::string sr_config, sr_ranks = "25%,50%,75%,100%";
  auto* srank = app.add_subcommand("sweep-rank", "Normalized Frobenius errors per estimator and rank");
  add_common(srank, sr, "sweep_rank.csv");
  srank->add_option("--config", sr_config, "Experiment configuration JSON");
  srank->add_option("--ranks", sr_ranks)->capture_default_str();

  // sweep-hyper
  Common sh;
  std::string sh_config;
  Json sh_json = Json::object();
  std::size_t sh_samples = 20;
  double sh_nlo = 1, sh_nhi = 1000, sh_tlo = 1e-3, sh_thi = 10;
  auto* shyper = app.add_subcommand("sweep-hyper", "Log-uniform random search over N and tau");
  add_common(shyper, sh, "sweep_hyper.csv");
  shyper->add_option("--config", sh_config, "Experiment configuration JSON");
  shyper->add_option("--samples", sh_samples)->capture_default_str();
  shyper->add_option("--n-lo", sh_nlo)->capture_default_str();
  shyper->add_option("--n-hi", sh_nhi)->capture_default_str();
  shyper->add_option("--tau-lo", sh_tlo)->capture_default_str();
  shyper->add_option("--tau-hi", sh_thi)->capture_default_str();

  // active-learn
  Common al;
  std::size_t al_iters = 10, al_initial = 20, al_val = 100, al_test = 100, al_pool = 200, al_epochs = 0;
  std::vector<std::string> al_ranks{"full"}, al_acq{"variance", "random"};
  auto* alearn = app.add_subcommand("active-learn", "Variance versus random acquisition on the toy task");
  add_common(alearn, al, "active_learn.csv");
  alearn->add_option("--iterations", al_iters)->capture_default_str();
  alearn->add_option("--initial-points", al_initial)->capture_default_str();
  alearn->add_option("--validation-points", al_val)->capture_default_str();
  alearn->add_option("--test-points", al_test)->capture_default_str();
  alearn->add_option("--pool-points", al_pool)->capture_default_str();
  alearn->add_option("--ranks", al_ranks)->delimiter(',')->capture_default_str();
  alearn->add_option("--acquisitions", al_acq)->delimiter(',')->capture_default_str();
  alearn->add_option("--epochs", al_epochs, "Epoch budget per retraining");

  // verify
  Common ve;
  std::size_t ve_trials = 100;
  bool ve_fault = false;
  auto* verify = app.add_subcommand("verify", "Run the theorem suite on random networks");
  add_common(verify, ve, "lemma_report.json");
  verify->add_option("--trials", ve_trials)->capture_default_str();
  verify->add_flag("--inject-fault", ve_fault, "Corrupt D to check that violations are caught (testing only)");

  // run
  Common ru;
  std::string ru_config;
  auto* run = app.add_subcommand("run", "End-to-end pipeline with a manifest of every artifact");
  add_common(run, ru, ".");
  run->add_option("--config", ru_config, "Experiment configuration JSON");

  CLI11_PARSE(app, argc, argv);
  tr_batch_set = batch_opt->count() > 0;

  try {
    if (*gen) {
      DatasetH d;
      check(sinf_dataset_toy(gt.seed, gt_points, &d.p));
      const fs::path out = gt.out_path();
      check(sinf_dataset_save(d.p, out.string().c_str()));
      std::cout << out.string() << "\n";
    } else if (*train) {
      Json cfg = read_json(tr_config);
      cfg["seed"] = tr.seed;
      Json& spec = cfg["spec"];
      if (!tr_layers.empty()) spec["layer_sizes"] = parse_sizes(tr_layers);
      if (!tr_activation.empty()) spec["activation"] = tr_activation;
      if (!tr_loss.empty()) spec["loss"] = tr_loss;
      if (spec.is_null() || spec.empty()) cfg.erase("spec");
      Json& t = cfg["train"];
      if (t.is_null()) t = Json::object();
      t["seed"] = tr.seed;
      if (!tr_optimizer.empty()) t["optimizer"] = tr_optimizer;
      if (tr_lr > 0) t["learning_rate"] = tr_lr;
      if (tr_epochs > 0) t["epochs"] = tr_epochs;
      if (tr_batch_set) t["batch_size"] = tr_batch;
      if (tr_wd >= 0) t["weight_decay"] = tr_wd;
      DatasetH d;
      check(sinf_dataset_load(tr_data.c_str(), &d.p));
      ModelH m;
      check(sinf_model_train(cfg.dump().c_str(), d.p, &m.p));
      const fs::path out = tr.out_path();
      check(sinf_model_save(m.p, out.string().c_str()));
      std::cout << out.string() << "\n";
    } else if (*post) {
      Json cfg = read_json(po_config);
      if (!po_estimator.empty()) cfg["estimator"] = po_estimator;
      if (!po_rank.empty()) cfg["rank"] = po_rank;
      if (po_n > 0) cfg["n_scale"] = po_n;
      if (po_tau >= 0) cfg["tau"] = po_tau;
      if (po_kmc > 0) cfg["k_mc"] = po_kmc;
      if (!po_policy.empty()) cfg["degenerate_policy"] = po_policy;
      if (!po_label_mode.empty()) cfg["label_mode"] = po_label_mode;
      if (po_eps > 0) cfg["eps"] = po_eps;
      if (po_budget > 0) cfg["rank_budget"] = po_budget;
      ModelH m;
      check(sinf_model_load(po_model.c_str(), &m.p));
      DatasetH d;
      check(sinf_dataset_load(po_data.c_str(), &d.p));
      PosteriorH p;
      check(sinf_posterior_build(m.p, d.p, cfg.dump().c_str(), po.seed, &p.p));
      const fs::path out = po.out_path();
      check(sinf_posterior_save(p.p, out.string().c_str()));
      Owned report;
      check(sinf_posterior_report(p.p, &report.p));
      std::cout << report.str() << "\n";
    } else if (*sample) {
      PosteriorH p;
      check(sinf_posterior_load(sa_posterior.c_str(), &p.p));
      std::size_t P = 0;
      check(sinf_posterior_dims(p.p, nullptr, nullptr, &P));
      std::vector<double> draws(sa_count * P);
      check(sinf_posterior_sample(p.p, sa.seed, sa_count, draws.data()));
      std::string csv = "draw";
      for (std::size_t i = 0; i < P; ++i) csv += ",theta_" + std::to_string(i);
      csv += "\n";
      for (std::size_t t = 0; t < sa_count; ++t) {
        csv += std::to_string(t);
        for (std::size_t i = 0; i < P; ++i) csv += "," + fmt(draws[t * P + i]);
        csv += "\n";
      }
      write_text(sa.out_path(), csv);
      std::cout << sa.out_path().string() << "\n";
    } else if (*pred) {
      PosteriorH p;
      check(sinf_posterior_load(pr_posterior.c_str(), &p.p));
      std::size_t in_dim = 0, out_dim = 0;
      check(sinf_posterior_dims(p.p, &in_dim, &out_dim, nullptr));
      Matrix x;
      if (!pr_data.empty()) {
        DatasetH d;
        check(sinf_dataset_load(pr_data.c_str(), &d.p));
        check(sinf_dataset_shape(d.p, &x.rows, &x.cols, nullptr));
        x.data.resize(x.rows * x.cols);
        check(sinf_dataset_inputs(d.p, x.data.data()));
      } else {
        if (in_dim != 1) {
          std::cerr << "error: --data is required for networks with more than one input\n";
          return SINF_ERR_CONTRACT;
        }
        x = grid(pr_lo, pr_hi, pr_points);
      }
      if (x.cols != in_dim) {
        std::cerr << "error: data has " << x.cols << " inputs, the network expects " << in_dim << "\n";
        return SINF_ERR_CONTRACT;
      }
      std::vector<double> mean(x.rows * out_dim), var(x.rows * out_dim, -1.0);
      check(sinf_posterior_predict(p.p, x.data.data(), x.rows, pr_method == "linearized", pr_kmc, pr.seed,
                                   mean.data(), var.data()));
      const bool regression = var.empty() || var[0] >= 0.0;
      std::string csv = "id";
      for (std::size_t c = 0; c < x.cols; ++c) csv += ",x_" + std::to_string(c);
      for (std::size_t k = 0; k < out_dim; ++k) {
        csv += regression ? ",mean_" + std::to_string(k) + ",var_" + std::to_string(k) : ",p_" + std::to_string(k);
      }
      csv += "\n";
      for (std::size_t r = 0; r < x.rows; ++r) {
        csv += std::to_string(r);
        for (std::size_t c = 0; c < x.cols; ++c) csv += "," + fmt(x.data[r * x.cols + c]);
        for (std::size_t k = 0; k < out_dim; ++k) {
          csv += "," + fmt(mean[r * out_dim + k]);
          if (regression) csv += "," + fmt(var[r * out_dim + k]);
        }
        csv += "\n";
      }
      write_text(pr.out_path(), csv);
      std::cout << pr.out_path().string() << "\n";
    } else if (*srank) {
      Json cfg = read_json(sr_config);
      cfg["seed"] = sr.seed;
      Owned csv;
      check(sinf_sweep_rank(cfg.dump().c_str(), sr_ranks.c_str(), &csv.p));
      write_text(sr.out_path(), csv.str());
      std::cout << csv.str();
    } else if (*shyper) {
      Json cfg = read_json(sh_config);
      cfg["seed"] = sh.seed;
      sh_json = {{"samples", sh_samples}, {"n_lo", sh_nlo}, {"n_hi", sh_nhi}, {"tau_lo", sh_tlo}, {"tau_hi", sh_thi}};
      Owned csv;
      check(sinf_sweep_hyper(cfg.dump().c_str(), sh_json.dump().c_str(), &csv.p));
      write_text(sh.out_path(), csv.str());
      std::cout << csv.str();
    } else if (*alearn) {
      Json cfg = {{"iterations", al_iters},      {"initial_points", al_initial}, {"validation_points", al_val},
                  {"test_points", al_test},      {"pool_points", al_pool},       {"ranks", al_ranks},
                  {"acquisitions", al_acq}};
      if (al_epochs > 0) cfg["train"] = {{"epochs", al_epochs}};
      Owned csv;
      check(sinf_active_learn(cfg.dump().c_str(), al.seed, &csv.p));
      write_text(al.out_path(), csv.str());
      std::cout << csv.str();
    } else if (*verify) {
      if (ve_trials == 0) std::cerr << "warning: --trials 0 checks nothing; the suite passes vacuously\n";
      const Json cfg = {{"trials", ve_trials}, {"seed", ve.seed}, {"inject_fault", ve_fault}};
      Owned report;
      const sinf_status s = sinf_verify(cfg.dump().c_str(), &report.p);
      if (report.p) write_text(ve.out_path(), report.str() + "\n");
      if (s == SINF_ERR_CHECK_FAILED) {
        std::cout << report.str() << "\n";
        std::cerr << "FAIL: " << sinf_last_error() << "\n";
        return s;
      }
      check(s);
      std::cout << report.str() << "\n";
      std::cout << "PASS: " << ve_trials << " trials\n";
    } else if (*run) {
      Json cfg = read_json(ru_config);
      cfg["seed"] = ru.seed;
      const fs::path dir = ru.out_path();
      Owned manifest;
      const sinf_status s = sinf_run_pipeline(cfg.dump().c_str(), dir.string().c_str(), &manifest.p);
      if (manifest.p) std::cout << manifest.str() << "\n";
      check(s);
    }
  } catch (const Failure& f) {
    return f.code;
  }
  return 0;
}
