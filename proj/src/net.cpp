// SPDX-License-Identifier: Apache-2.0

#include "sparseinf/net.hpp"

#include "sparseinf/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sparseinf {

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "identity") return Activation::identity;
  throw ContractViolation("unknown activation '" + std::string(name) + "'");
}

Loss parse_loss(std::string_view name) {
  if (name == "mse") return Loss::mse;
  if (name == "cross_entropy") return Loss::cross_entropy;
  throw ContractViolation("unknown loss '" + std::string(name) + "'");
}

LabelMode parse_label_mode(std::string_view name) {
  if (name == "model_sampled") return LabelMode::model_sampled;
  if (name == "empirical") return LabelMode::empirical;
  throw ContractViolation("unknown label mode '" + std::string(name) + "'");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "?";
}

std::string to_string(Loss l) { return l == Loss::mse ? "mse" : "cross_entropy"; }

std::size_t NetworkSpec::num_params() const {
  std::size_t total = 0;
  for (std::size_t i = 0; i < num_layers(); ++i) total += layer_params(i);
  return total;
}

void NetworkSpec::validate() const {
  if (layer_sizes.size() < 2) throw ContractViolation("NetworkSpec: need at least two layer sizes");
  for (std::size_t s : layer_sizes) {
    if (s == 0) throw ContractViolation("NetworkSpec: layer sizes must be positive");
  }
  if (loss == Loss::cross_entropy && output_dim() < 2) {
    throw ContractViolation("NetworkSpec: cross entropy needs at least two classes");
  }
}

Vector Weights::layer_vec(std::size_t i) const {
  const Matrix& w = layers.at(i);
  return Eigen::Map<const Vector>(w.data(), w.size());
}

void Weights::set_layer_vec(std::size_t i, const Eigen::Ref<const Vector>& theta) {
  Matrix& w = layers.at(i);
  if (theta.size() != w.size()) throw ContractViolation("Weights::set_layer_vec: size mismatch");
  Eigen::Map<Vector>(w.data(), w.size()) = theta;
}

Vector Weights::flatten() const {
  Eigen::Index total = 0;
  for (const Matrix& w : layers) total += w.size();
  Vector out(total);
  Eigen::Index off = 0;
  for (const Matrix& w : layers) {
    out.segment(off, w.size()) = Eigen::Map<const Vector>(w.data(), w.size());
    off += w.size();
  }
  return out;
}

void validate_weights(const NetworkSpec& spec, const Weights& w) {
  spec.validate();
  if (w.layers.size() != spec.num_layers()) throw ContractViolation("weights: wrong number of layers");
  for (std::size_t i = 0; i < spec.num_layers(); ++i) {
    const Matrix& m = w.layers[i];
    if (static_cast<std::size_t>(m.rows()) != spec.layer_sizes[i + 1] ||
        static_cast<std::size_t>(m.cols()) != spec.layer_sizes[i] + 1) {
      throw ContractViolation("weights: layer " + std::to_string(i) + " has shape " + std::to_string(m.rows()) +
                              "x" + std::to_string(m.cols()));
    }
    if (!m.allFinite()) throw ContractViolation("weights: layer " + std::to_string(i) + " is not finite");
  }
}

namespace {

double activate(Activation a, double h) {
  switch (a) {
    case Activation::relu: return h > 0.0 ? h : 0.0;
    case Activation::tanh: return std::tanh(h);
    case Activation::identity: return h;
  }
  return h;
}

double activate_grad(Activation a, double h) {
  switch (a) {
    case Activation::relu: return h > 0.0 ? 1.0 : 0.0;
    case Activation::tanh: {
      const double t = std::tanh(h);
      return 1.0 - t * t;
    }
    case Activation::identity: return 1.0;
  }
  return 1.0;
}

Vector augment(const Eigen::Ref<const Vector>& v) {
  Vector a(v.size() + 1);
  a.head(v.size()) = v;
  a(v.size()) = 1.0;
  return a;
}

Vector output_gradient(const NetworkSpec& spec, const Vector& output, const Dataset& data, std::size_t row) {
  if (spec.loss == Loss::mse) {
    return output - data.y.row(static_cast<Eigen::Index>(row)).transpose();
  }
  Vector p = softmax(output);
  p(data.labels[row]) -= 1.0;
  return p;
}

void check_data(const NetworkSpec& spec, const Dataset& data) {
  if (data.input_dim() != spec.input_dim()) throw ContractViolation("dataset input dimension mismatch");
  if (spec.loss == Loss::mse) {
    if (data.classification || static_cast<std::size_t>(data.y.cols()) != spec.output_dim() ||
        data.y.rows() != data.x.rows()) {
      throw ContractViolation("mse loss needs regression targets matching the output dimension");
    }
  } else {
    if (!data.classification || data.labels.size() != data.size()) {
      throw ContractViolation("cross entropy needs integer labels");
    }
    for (int l : data.labels) {
      if (l < 0 || static_cast<std::size_t>(l) >= spec.output_dim()) {
        throw ContractViolation("label out of range");
      }
    }
  }
}

}  // namespace

Vector softmax(const Eigen::Ref<const Vector>& logits) {
  const double mx = logits.maxCoeff();
  Vector e = (logits.array() - mx).exp();
  return e / e.sum();
}

ForwardResult forward(const NetworkSpec& spec, const Weights& w, const Eigen::Ref<const Vector>& x) {
  if (static_cast<std::size_t>(x.size()) != spec.input_dim()) {
    throw ContractViolation("forward: input has length " + std::to_string(x.size()) + ", expected " +
                            std::to_string(spec.input_dim()));
  }
  ForwardResult r;
  const std::size_t layers = spec.num_layers();
  r.cache.inputs.reserve(layers);
  r.cache.preacts.reserve(layers);
  Vector act = x;
  for (std::size_t i = 0; i < layers; ++i) {
    r.cache.inputs.push_back(augment(act));
    Vector h = w.layers[i] * r.cache.inputs.back();
    if (!h.allFinite()) throw NumericFailure(i, "pre-activation");
    r.cache.preacts.push_back(h);
    if (i + 1 < layers) {
      act = h.unaryExpr([&](double v) { return activate(spec.activation, v); });
    } else {
      act = h;
    }
  }
  r.output = std::move(act);
  return r;
}

Vector predict(const NetworkSpec& spec, const Weights& w, const Eigen::Ref<const Vector>& x) {
  return forward(spec, w, x).output;
}

std::vector<Vector> backward(const NetworkSpec& spec, const Weights& w, const ForwardCache& cache,
                             const Eigen::Ref<const Vector>& output_grad) {
  const std::size_t layers = spec.num_layers();
  std::vector<Vector> g(layers);
  g[layers - 1] = output_grad;
  for (std::size_t i = layers - 1; i > 0; --i) {
    const Matrix& wi = w.layers[i];
    Vector upstream = wi.leftCols(wi.cols() - 1).transpose() * g[i];
    const Vector& h = cache.preacts[i - 1];
    for (Eigen::Index k = 0; k < upstream.size(); ++k) upstream(k) *= activate_grad(spec.activation, h(k));
    if (!upstream.allFinite()) throw NumericFailure(i - 1, "backpropagated gradient");
    g[i - 1] = std::move(upstream);
  }
  return g;
}

double sample_loss(const NetworkSpec& spec, const Weights& w, const Dataset& data, std::size_t row) {
  const Vector out = predict(spec, w, data.x.row(static_cast<Eigen::Index>(row)).transpose());
  if (spec.loss == Loss::mse) {
    return 0.5 * (out - data.y.row(static_cast<Eigen::Index>(row)).transpose()).squaredNorm();
  }
  const double mx = out.maxCoeff();
  const double lse = mx + std::log((out.array() - mx).exp().sum());
  return lse - out(data.labels[row]);
}

double dataset_loss(const NetworkSpec& spec, const Weights& w, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t r = 0; r < data.size(); ++r) total += sample_loss(spec, w, data, r);
  return total / static_cast<double>(data.size());
}

Vector LayerFactorBatch::sample_gradient(std::size_t t) const {
  const auto col = static_cast<Eigen::Index>(t);
  Vector out(a.rows() * g.rows());
  Eigen::Map<Matrix>(out.data(), g.rows(), a.rows()).noalias() = g.col(col) * a.col(col).transpose();
  return out;
}

void LayerFactorBatch::validate() const {
  if (a.cols() != g.cols()) throw ContractViolation("LayerFactorBatch: a and g sample counts differ");
  if (a.cols() < 1) throw ContractViolation("LayerFactorBatch: empty batch");
  if (a.rows() < 1 || g.rows() < 1) throw ContractViolation("LayerFactorBatch: empty factors");
}

std::vector<LayerFactorBatch> per_sample_factors(const NetworkSpec& spec, const Weights& w, const Dataset& data,
                                                 LabelMode mode, Rng& rng) {
  validate_weights(spec, w);
  check_data(spec, data);
  const std::size_t layers = spec.num_layers();
  const auto count = static_cast<Eigen::Index>(data.size());
  std::vector<LayerFactorBatch> out(layers);
  for (std::size_t i = 0; i < layers; ++i) {
    out[i].a.resize(static_cast<Eigen::Index>(spec.layer_sizes[i] + 1), count);
    out[i].g.resize(static_cast<Eigen::Index>(spec.layer_sizes[i + 1]), count);
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index t = 0; t < count; ++t) {
    ForwardResult f = forward(spec, w, data.x.row(t).transpose());
    Vector out_grad;
    if (mode == LabelMode::empirical) {
      out_grad = output_gradient(spec, f.output, data, static_cast<std::size_t>(t));
    } else if (spec.loss == Loss::mse) {
      // y = f + eps, eps ~ N(0, I): the mse gradient is f - y = -eps.
      out_grad.resize(f.output.size());
      for (Eigen::Index k = 0; k < out_grad.size(); ++k) out_grad(k) = -normal(rng);
    } else {
      const Vector p = softmax(f.output);
      std::discrete_distribution<int> pick(p.data(), p.data() + p.size());
      out_grad = p;
      out_grad(pick(rng)) -= 1.0;
    }
    const std::vector<Vector> g = backward(spec, w, f.cache, out_grad);
    for (std::size_t i = 0; i < layers; ++i) {
      out[i].a.col(t) = f.cache.inputs[i];
      out[i].g.col(t) = g[i];
    }
  }
  return out;
}

std::vector<Vector> output_jacobian(const NetworkSpec& spec, const Weights& w, const Eigen::Ref<const Vector>& x,
                                    std::size_t k) {
  if (k >= spec.output_dim()) throw ContractViolation("output_jacobian: output index out of range");
  ForwardResult f = forward(spec, w, x);
  Vector seed = Vector::Zero(f.output.size());
  seed(static_cast<Eigen::Index>(k)) = 1.0;
  const std::vector<Vector> g = backward(spec, w, f.cache, seed);
  std::vector<Vector> out;
  out.reserve(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Vector& a = f.cache.inputs[i];
    Vector j(a.size() * g[i].size());
    Eigen::Map<Matrix>(j.data(), g[i].size(), a.size()).noalias() = g[i] * a.transpose();
    out.push_back(std::move(j));
  }
  return out;
}

Weights init_weights(const NetworkSpec& spec, Rng& rng) {
  spec.validate();
  Weights w;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < spec.num_layers(); ++i) {
    const auto in = static_cast<Eigen::Index>(spec.layer_sizes[i]);
    const auto out = static_cast<Eigen::Index>(spec.layer_sizes[i + 1]);
    const double gain = spec.activation == Activation::relu && i + 1 < spec.num_layers() ? 2.0 : 1.0;
    const double scale = std::sqrt(gain / static_cast<double>(in));
    Matrix m(out, in + 1);
    for (Eigen::Index c = 0; c < in; ++c) {
      for (Eigen::Index r = 0; r < out; ++r) m(r, c) = scale * normal(rng);
    }
    for (Eigen::Index r = 0; r < out; ++r) m(r, in) = 0.1 * normal(rng);
    w.layers.push_back(std::move(m));
  }
  return w;
}

TrainResult train_map(const NetworkSpec& spec, const Dataset& data, const TrainConfig& config) {
  Rng rng = make_stream(config.seed, {0x696e6974});
  return train_map(spec, data, config, init_weights(spec, rng));
}

TrainResult train_map(const NetworkSpec& spec, const Dataset& data, const TrainConfig& config, Weights start) {
  validate_weights(spec, start);
  check_data(spec, data);
  if (data.size() == 0) throw ContractViolation("train_map: empty dataset");
  if (!(config.learning_rate > 0.0)) throw ContractViolation("train_map: learning rate must be positive");

  TrainResult result;
  result.weights = std::move(start);
  Weights& w = result.weights;
  const std::size_t layers = spec.num_layers();
  const std::size_t n = data.size();
  const std::size_t batch = config.batch_size == 0 ? n : std::min(config.batch_size, n);

  std::vector<Matrix> m1(layers), m2(layers);
  for (std::size_t i = 0; i < layers; ++i) {
    m1[i] = Matrix::Zero(w.layers[i].rows(), w.layers[i].cols());
    m2[i] = m1[i];
  }
  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double eps = 1e-8;
  std::size_t step = 0;

  Rng shuffle_rng = make_stream(config.seed, {0x73687566});
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  result.loss_trace.push_back(dataset_loss(spec, w, data));
  std::vector<Matrix> grad(layers);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) try {
    if (batch < n) std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start_row = 0; start_row < n; start_row += batch) {
      const std::size_t stop = std::min(n, start_row + batch);
      for (std::size_t i = 0; i < layers; ++i) grad[i] = config.weight_decay * w.layers[i];
      const double inv = 1.0 / static_cast<double>(stop - start_row);
      for (std::size_t k = start_row; k < stop; ++k) {
        const std::size_t row = order[k];
        ForwardResult f = forward(spec, w, data.x.row(static_cast<Eigen::Index>(row)).transpose());
        const std::vector<Vector> g = backward(spec, w, f.cache, output_gradient(spec, f.output, data, row));
        for (std::size_t i = 0; i < layers; ++i) grad[i].noalias() += inv * g[i] * f.cache.inputs[i].transpose();
      }
      ++step;
      for (std::size_t i = 0; i < layers; ++i) {
        if (config.optimizer == Optimizer::sgd) {
          w.layers[i] -= config.learning_rate * grad[i];
          continue;
        }
        m1[i] = beta1 * m1[i] + (1.0 - beta1) * grad[i];
        m2[i] = beta2 * m2[i] + (1.0 - beta2) * grad[i].cwiseAbs2();
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        w.layers[i].array() -= config.learning_rate * (m1[i].array() / c1) / ((m2[i].array() / c2).sqrt() + eps);
      }
    }
    const double loss = dataset_loss(spec, w, data);
    if (!std::isfinite(loss)) throw TrainingFailure(epoch, "loss is not finite");
    result.loss_trace.push_back(loss);
    if (config.on_epoch) config.on_epoch(epoch, w);
  } catch (const NumericFailure& e) {
    throw TrainingFailure(epoch, e.what());
  }
  return result;
}

}  // namespace sparseinf
