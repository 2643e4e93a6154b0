// SPDX-License-Identifier: Apache-2.0
//
// End-to-end pipelines composed from the library: toy data, MAP training,
// posterior construction, predictions, rank and hyperparameter sweeps and
// the active-learning loop.

#ifndef SPARSEINF_EXPERIMENT_HPP
#define SPARSEINF_EXPERIMENT_HPP

#include "sparseinf/eval.hpp"
#include "sparseinf/io.hpp"
#include "sparseinf/posterior.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sparseinf {

/// 1-7-1 relu regression net.
NetworkSpec toy_spec();

/// Adam, learning rate 1e-3, minibatches of 10, 2000 epochs.
TrainConfig toy_train_config(std::uint64_t seed);

struct ExperimentConfig {
  std::optional<std::filesystem::path> data_csv;  // toy cubic when unset
  std::size_t toy_points = 100;
  std::size_t test_points = 100;
  NetworkSpec spec = toy_spec();
  TrainConfig train = toy_train_config(0);
  PosteriorConfig posterior;
  std::filesystem::path out_dir;
  std::uint64_t seed = 0;
  double grid_lo = -6.0;
  double grid_hi = 6.0;
  std::size_t grid_points = 241;

  void validate() const;
};

Json to_json(const ExperimentConfig& c);
ExperimentConfig experiment_config_from_json(const Json& j);

/// Training data and held-out data for a config. The toy test set is drawn
/// from an independent stream; CSV data is used for both.
struct DataSplit {
  Dataset train;
  Dataset test;
};

DataSplit load_data(const ExperimentConfig& c);

/// Mean linearized predictive std over |x| in [5, 6] divided by the mean over
/// |x| <= 3, on 0.05-spaced grids. 1-D regression only.
double uncertainty_ratio(const Posterior& post);

struct PipelineResult {
  bool ok = false;
  Json manifest;
  Json metrics;
};

/// train -> capture -> estimator -> sparsify -> validity -> sampler ->
/// predictions -> metrics. Writes artifacts and manifest.json to out_dir.
/// Stage failures are recorded in the manifest, never thrown.
PipelineResult run_pipeline(const ExperimentConfig& config);

/// Normalized Frobenius errors against the exact block information matrix for
/// every layer: diag, kfac, efb at full rank and inf at each requested rank.
CsvTable sweep_rank(const ExperimentConfig& config, const std::vector<RankSpec>& ranks);

struct HyperSweepConfig {
  std::size_t samples = 20;
  double n_lo = 1.0;
  double n_hi = 1000.0;
  double tau_lo = 1e-3;
  double tau_hi = 10.0;
};

/// Log-uniform random (N, tau) pairs scored by linearized test RMSE and log
/// likelihood.
CsvTable sweep_hyper(const ExperimentConfig& config, const HyperSweepConfig& sweep);

/// Adam, learning rate 1e-2, minibatches of 20, at most 40 epochs.
TrainConfig al_train_config();

enum class Acquisition { variance, random };

std::string to_string(Acquisition a);
Acquisition parse_acquisition(std::string_view name);

struct ActiveLearnConfig {
  std::size_t iterations = 10;
  std::size_t initial_points = 20;
  std::size_t validation_points = 100;
  std::size_t test_points = 100;
  std::size_t pool_points = 200;
  std::vector<Acquisition> acquisitions = {Acquisition::variance, Acquisition::random};
  std::vector<RankSpec> ranks = {RankSpec::full()};
  /// N candidates as fractions of the current training-set size.
  std::vector<double> n_fractions = {0.5, 1.0};
  std::vector<double> taus = {1.0, 200.0, 400.0};
  /// Upper epoch budget; the weights with the lowest validation RMSE are kept.
  TrainConfig train = al_train_config();
};

/// One row per (acquisition, rank, iteration): training-set size and test RMSE
/// after retraining with early stopping. (N, tau) of the acquisition posterior
/// maximize the validation log likelihood. Iteration 0 is the baseline before any acquisition.
/// Random acquisition ignores the rank and is emitted once with rank "-".
CsvTable active_learn(std::uint64_t seed, const ActiveLearnConfig& config);

}  // namespace sparseinf

#endif  // SPARSEINF_EXPERIMENT_HPP
