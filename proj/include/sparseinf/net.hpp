// SPDX-License-Identifier: Apache-2.0
//
// Small fully-connected networks with per-sample capture of layer inputs and
// pre-activation gradients.

#ifndef SPARSEINF_NET_HPP
#define SPARSEINF_NET_HPP

#include "sparseinf/data.hpp"
#include "sparseinf/kronlin.hpp"
#include "sparseinf/random.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace sparseinf {

enum class Activation { relu, tanh, identity };
enum class Loss { mse, cross_entropy };
enum class LabelMode { model_sampled, empirical };

Activation parse_activation(std::string_view name);
Loss parse_loss(std::string_view name);
LabelMode parse_label_mode(std::string_view name);
std::string to_string(Activation a);
std::string to_string(Loss l);

/// Hidden layers use `activation`; the output layer is always affine (identity
/// for regression, logits for classification).
struct NetworkSpec {
  std::vector<std::size_t> layer_sizes;
  Activation activation = Activation::relu;
  Loss loss = Loss::mse;

  std::size_t num_layers() const noexcept { return layer_sizes.empty() ? 0 : layer_sizes.size() - 1; }
  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t output_dim() const { return layer_sizes.back(); }
  /// Parameters of layer i (0-based) including the bias column.
  std::size_t layer_params(std::size_t i) const { return (layer_sizes[i] + 1) * layer_sizes[i + 1]; }
  std::size_t num_params() const;
  void validate() const;
};

/// One (out_i x (in_i + 1)) matrix per layer; the last column is the bias.
struct Weights {
  std::vector<Matrix> layers;

  /// vec(W_i), column-stacked.
  Vector layer_vec(std::size_t i) const;
  void set_layer_vec(std::size_t i, const Eigen::Ref<const Vector>& theta);
  Vector flatten() const;
};

void validate_weights(const NetworkSpec& spec, const Weights& w);

/// Augmented inputs a_{i-1} (trailing 1) and pre-activations h_i per layer.
struct ForwardCache {
  std::vector<Vector> inputs;
  std::vector<Vector> preacts;
};

struct ForwardResult {
  Vector output;
  ForwardCache cache;
};

ForwardResult forward(const NetworkSpec& spec, const Weights& w, const Eigen::Ref<const Vector>& x);

/// Network output (regression values or logits).
Vector predict(const NetworkSpec& spec, const Weights& w, const Eigen::Ref<const Vector>& x);

Vector softmax(const Eigen::Ref<const Vector>& logits);

/// Gradients g_i = dL/dh_i for every layer given dL/d(output).
std::vector<Vector> backward(const NetworkSpec& spec, const Weights& w, const ForwardCache& cache,
                             const Eigen::Ref<const Vector>& output_grad);

/// Per-sample loss: 0.5 |f - y|^2 (mse) or -log softmax(f)_y (cross entropy).
double sample_loss(const NetworkSpec& spec, const Weights& w, const Dataset& data, std::size_t row);
double dataset_loss(const NetworkSpec& spec, const Weights& w, const Dataset& data);

/// Per-sample factors of one layer. Column t of `a` is the augmented input of
/// sample t, column t of `g` its pre-activation gradient.
struct LayerFactorBatch {
  Matrix a;  // (in + 1) x count
  Matrix g;  // out x count

  std::size_t count() const noexcept { return static_cast<std::size_t>(a.cols()); }
  std::size_t n() const noexcept { return static_cast<std::size_t>(a.rows()); }
  std::size_t m() const noexcept { return static_cast<std::size_t>(g.rows()); }
  /// vec(g_t a_t^T) = a_t (x) g_t.
  Vector sample_gradient(std::size_t t) const;
  void validate() const;
};

/// Captures (a, g) for every sample and layer. In model_sampled mode one label
/// per input is drawn from the network's predictive distribution (unit-variance
/// Gaussian for mse, categorical for cross entropy) before backpropagation; in
/// empirical mode the dataset labels are used. Samples are processed in
/// dataset order.
std::vector<LayerFactorBatch> per_sample_factors(const NetworkSpec& spec, const Weights& w, const Dataset& data,
                                                 LabelMode mode, Rng& rng);

/// Gradient of output `k` with respect to every layer's vec(W_i).
std::vector<Vector> output_jacobian(const NetworkSpec& spec, const Weights& w, const Eigen::Ref<const Vector>& x,
                                    std::size_t k);

enum class Optimizer { sgd, adam };

struct TrainConfig {
  Optimizer optimizer = Optimizer::adam;
  double learning_rate = 1e-3;
  std::size_t epochs = 2000;
  std::size_t batch_size = 0;  // 0 means full batch
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  /// Called after every epoch with the epoch index and current weights.
  std::function<void(std::size_t, const Weights&)> on_epoch;
};

struct TrainResult {
  Weights weights;
  std::vector<double> loss_trace;  // dataset loss before training, then after each epoch
};

Weights init_weights(const NetworkSpec& spec, Rng& rng);

/// MAP training from a seeded initialisation. Throws TrainingFailure when the
/// loss becomes non-finite.
TrainResult train_map(const NetworkSpec& spec, const Dataset& data, const TrainConfig& config);

/// Continues training from the given weights.
TrainResult train_map(const NetworkSpec& spec, const Dataset& data, const TrainConfig& config, Weights start);

}  // namespace sparseinf

#endif  // SPARSEINF_NET_HPP
