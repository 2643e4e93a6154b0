// SPDX-License-Identifier: Apache-2.0
#include "sparseinf/errors.hpp"
#include "sparseinf/net.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace sparseinf;
using namespace sparseinf::testing;

namespace {

NetworkSpec linear11() {
  NetworkSpec s;
  s.layer_sizes = {1, 1};
  s.activation = Activation::identity;
  return s;
}

// Straightforward re-implementation used as an oracle.
double naive_relu_net(const Weights& w, const Vector& x) {
  Vector act = x;
  for (std::size_t i = 0; i < w.layers.size(); ++i) {
    const Matrix& W = w.layers[i];
    Vector h(W.rows());
    for (Eigen::Index r = 0; r < W.rows(); ++r) {
      double s = W(r, W.cols() - 1);
      for (Eigen::Index c = 0; c + 1 < W.cols(); ++c) s += W(r, c) * act(c);
      h(r) = s;
    }
    if (i + 1 < w.layers.size())
      for (Eigen::Index r = 0; r < h.size(); ++r) h(r) = h(r) > 0 ? h(r) : 0.0;
    act = h;
  }
  return act(0);
}

}  // namespace

TEST(Forward, ZeroWeightsIdentity) {
  NetworkSpec s;
  s.layer_sizes = {3, 4, 2};
  s.activation = Activation::identity;
  Weights w;
  w.layers = {Matrix::Zero(4, 4), Matrix::Zero(2, 5)};
  EXPECT_TRUE(predict(s, w, Vector::Ones(3)).isZero(0.0));
}

TEST(Forward, AffineByHand) {
  Weights w;
  w.layers = {Matrix(1, 2)};
  w.layers[0] << 2.0, 1.0;
  EXPECT_DOUBLE_EQ(predict(linear11(), w, Vector::Constant(1, 3.0))(0), 7.0);
}

TEST(Forward, MatchesNaiveRelu) {
  NetworkSpec s;
  s.layer_sizes = {2, 3, 1};
  s.activation = Activation::relu;
  Rng rng = make_stream(11);
  for (int trial = 0; trial < 20; ++trial) {
    Weights w = init_weights(s, rng);
    Vector x = random_vector(rng, 2);
    EXPECT_NEAR(predict(s, w, x)(0), naive_relu_net(w, x), 1e-12);
  }
}

TEST(Forward, CacheHasTrailingOnes) {
  NetworkSpec s;
  s.layer_sizes = {2, 3, 4, 1};
  Rng rng = make_stream(12);
  Weights w = init_weights(s, rng);
  ForwardResult f = forward(s, w, random_vector(rng, 2));
  ASSERT_EQ(f.cache.inputs.size(), 3u);
  for (const Vector& a : f.cache.inputs) EXPECT_EQ(a(a.size() - 1), 1.0);
}

TEST(Forward, NonFiniteReportsLayer) {
  NetworkSpec s;
  s.layer_sizes = {1, 2, 1};
  Weights w;
  w.layers = {Matrix::Constant(2, 2, 1e308), Matrix::Constant(1, 3, 1e308)};
  try {
    predict(s, w, Vector::Constant(1, 1e308));
    FAIL();
  } catch (const NumericFailure& e) {
    EXPECT_EQ(e.layer(), 0u);
  }
}

TEST(Forward, WrongInputLength) {
  Weights w;
  w.layers = {Matrix::Zero(1, 2)};
  EXPECT_THROW(predict(linear11(), w, Vector::Zero(2)), ContractViolation);
}

TEST(Factors, SingleSampleIdentityNetMse) {
  Weights w;
  w.layers = {Matrix(1, 2)};
  w.layers[0] << 2.0, 1.0;
  Dataset d;
  d.x = Matrix::Constant(1, 1, 3.0);
  d.y = Matrix::Constant(1, 1, 5.0);
  Rng rng = make_stream(0);
  auto f = per_sample_factors(linear11(), w, d, LabelMode::empirical, rng);
  ASSERT_EQ(f.size(), 1u);
  EXPECT_DOUBLE_EQ(f[0].g(0, 0), 7.0 - 5.0);
  EXPECT_DOUBLE_EQ(f[0].a(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(f[0].a(1, 0), 1.0);
}

TEST(Factors, BatchCount) {
  NetworkSpec s;
  s.layer_sizes = {2, 3, 1};
  Rng rng = make_stream(13);
  Weights w = init_weights(s, rng);
  Dataset d = random_regression(rng, 2, 2, 1);
  auto f = per_sample_factors(s, w, d, LabelMode::model_sampled, rng);
  for (const auto& b : f) EXPECT_EQ(b.count(), 2u);
}

TEST(Factors, TrailingOneInvariant) {
  Rng rng = make_stream(14);
  NetworkSpec s = random_spec(rng, 5);
  Weights w = init_weights(s, rng);
  Dataset d = random_regression(rng, 7, s.input_dim(), s.output_dim());
  for (const auto& b : per_sample_factors(s, w, d, LabelMode::model_sampled, rng))
    EXPECT_TRUE((b.a.row(b.a.rows() - 1).array() == 1.0).all());
}

TEST(Factors, ModelSampledIgnoresLabels) {
  Rng rng = make_stream(15);
  NetworkSpec s = random_spec(rng, 4);
  Weights w = init_weights(s, rng);
  Dataset d = random_regression(rng, 9, s.input_dim(), s.output_dim());
  Dataset e = d;
  e.y.setRandom();
  Rng r1 = make_stream(99), r2 = make_stream(99);
  auto f1 = per_sample_factors(s, w, d, LabelMode::model_sampled, r1);
  auto f2 = per_sample_factors(s, w, e, LabelMode::model_sampled, r2);
  for (std::size_t i = 0; i < f1.size(); ++i) {
    EXPECT_EQ(f1[i].a, f2[i].a);
    EXPECT_EQ(f1[i].g, f2[i].g);
  }
}

TEST(Factors, CrossEntropyModelSampled) {
  NetworkSpec s;
  s.layer_sizes = {2, 3, 3};
  s.loss = Loss::cross_entropy;
  Rng rng = make_stream(16);
  Weights w = init_weights(s, rng);
  Dataset d;
  d.classification = true;
  d.x = random_matrix(rng, 5, 2);
  d.labels = {0, 1, 2, 0, 1};
  auto f = per_sample_factors(s, w, d, LabelMode::model_sampled, rng);
  // g_out = softmax - onehot sums to zero.
  for (Eigen::Index t = 0; t < 5; ++t) EXPECT_NEAR(f.back().g.col(t).sum(), 0.0, 1e-12);
}

// Per-sample gradient vec(g a^T) vs central differences of the per-sample loss.
TEST(Factors, GradientCheck) {
  Rng rng = make_stream(17);
  for (int trial = 0; trial < 10; ++trial) {
    NetworkSpec s = random_spec(rng, 4, trial % 2 ? Activation::tanh : Activation::identity);
    if (trial % 3 == 0) {
      s.loss = Loss::cross_entropy;
      s.layer_sizes.back() = std::max<std::size_t>(2, s.layer_sizes.back());
    }
    Weights w = init_weights(s, rng);
    Dataset d;
    d.x = random_matrix(rng, 1, static_cast<Eigen::Index>(s.input_dim()));
    if (s.loss == Loss::mse) {
      d.y = random_matrix(rng, 1, static_cast<Eigen::Index>(s.output_dim()));
    } else {
      d.classification = true;
      d.labels = {static_cast<int>(s.output_dim() - 1)};
    }
    auto f = per_sample_factors(s, w, d, LabelMode::empirical, rng);
    for (std::size_t i = 0; i < s.num_layers(); ++i) {
      const Vector grad = f[i].sample_gradient(0);
      Vector theta = w.layer_vec(i);
      for (Eigen::Index k = 0; k < theta.size(); ++k) {
        const double h = 1e-6;
        Weights wp = w, wm = w;
        Vector tp = theta, tm = theta;
        tp(k) += h;
        tm(k) -= h;
        wp.set_layer_vec(i, tp);
        wm.set_layer_vec(i, tm);
        const double fd = (sample_loss(s, wp, d, 0) - sample_loss(s, wm, d, 0)) / (2 * h);
        EXPECT_NEAR(grad(k), fd, 1e-5);
      }
    }
  }
}

TEST(Factors, OutputJacobianMatchesFiniteDifferences) {
  Rng rng = make_stream(18);
  NetworkSpec s;
  s.layer_sizes = {1, 5, 1};
  s.activation = Activation::tanh;
  Weights w = init_weights(s, rng);
  Vector x = Vector::Constant(1, 0.7);
  auto jac = output_jacobian(s, w, x, 0);
  for (std::size_t i = 0; i < 2; ++i) {
    Vector theta = w.layer_vec(i);
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
      Weights wp = w, wm = w;
      Vector tp = theta, tm = theta;
      tp(k) += 1e-6;
      tm(k) -= 1e-6;
      wp.set_layer_vec(i, tp);
      wm.set_layer_vec(i, tm);
      EXPECT_NEAR(jac[i](k), (predict(s, wp, x)(0) - predict(s, wm, x)(0)) / 2e-6, 1e-6);
    }
  }
}

TEST(Factors, UnknownLabelMode) { EXPECT_THROW(parse_label_mode("bogus"), ContractViolation); }

TEST(Train, LinearRecoversSlope) {
  Dataset d;
  d.x.resize(20, 1);
  d.y.resize(20, 1);
  for (int i = 0; i < 20; ++i) {
    d.x(i, 0) = -1.0 + 0.1 * i;
    d.y(i, 0) = 2.0 * d.x(i, 0);
  }
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.epochs = 3000;
  cfg.seed = 3;
  TrainResult r = train_map(linear11(), d, cfg);
  EXPECT_NEAR(r.weights.layers[0](0, 0), 2.0, 1e-2);
  EXPECT_NEAR(r.weights.layers[0](0, 1), 0.0, 1e-2);
}

TEST(Train, ToyCubicImproves) {
  NetworkSpec s;
  s.layer_sizes = {1, 7, 1};
  s.activation = Activation::relu;
  TrainConfig cfg;
  cfg.epochs = 500;
  cfg.learning_rate = 0.01;
  TrainResult r = train_map(s, make_toy_cubic(1, 100), cfg);
  EXPECT_LT(r.loss_trace.back(), r.loss_trace.front());
  EXPECT_EQ(r.loss_trace.size(), cfg.epochs + 1);
}

TEST(Train, Deterministic) {
  NetworkSpec s;
  s.layer_sizes = {1, 7, 1};
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.batch_size = 16;
  cfg.seed = 77;
  Dataset d = make_toy_cubic(2, 100);
  TrainResult a = train_map(s, d, cfg), b = train_map(s, d, cfg);
  for (std::size_t i = 0; i < a.weights.layers.size(); ++i) EXPECT_EQ(a.weights.layers[i], b.weights.layers[i]);
}

TEST(Train, DivergenceIsReported) {
  NetworkSpec s;
  s.layer_sizes = {1, 4, 1};
  s.activation = Activation::identity;
  Dataset d = make_toy_cubic(3, 50);
  d.y *= 1e150;
  TrainConfig cfg;
  cfg.optimizer = Optimizer::sgd;
  cfg.learning_rate = 10.0;
  cfg.epochs = 200;
  EXPECT_THROW(train_map(s, d, cfg), TrainingFailure);
}

TEST(Train, EmptyDataset) {
  Dataset d;
  d.x.resize(0, 1);
  d.y.resize(0, 1);
  EXPECT_THROW(train_map(linear11(), d, TrainConfig{}), ContractViolation);
}
