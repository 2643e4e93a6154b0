// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "sparseinf/data.hpp"
#include "sparseinf/fisher.hpp"
#include "sparseinf/kronlin.hpp"
#include "sparseinf/net.hpp"
#include "sparseinf/random.hpp"

#include <random>

namespace sparseinf::testing {

inline Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> nd;
  Matrix m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = nd(rng);
  return m;
}

inline Vector random_vector(Rng& rng, Eigen::Index n) { return random_matrix(rng, n, 1).col(0); }

inline Matrix random_spd(Rng& rng, Eigen::Index n) {
  Matrix b = random_matrix(rng, n, n);
  return b.transpose() * b + Matrix::Identity(n, n);
}

inline Matrix random_orthogonal(Rng& rng, Eigen::Index n) {
  Eigen::HouseholderQR<Matrix> qr(random_matrix(rng, n, n));
  return qr.householderQ() * Matrix::Identity(n, n);
}

// Random layer batch with trailing 1 on every a.
inline LayerFactorBatch random_batch(Rng& rng, Eigen::Index n, Eigen::Index m, Eigen::Index count) {
  LayerFactorBatch b;
  b.a = random_matrix(rng, n, count);
  b.a.row(n - 1).setOnes();
  b.g = random_matrix(rng, m, count);
  return b;
}

// Independent re-implementation of the exact block: sum of outer products of
// explicitly built Kronecker vectors.
inline Matrix naive_exact_block(const LayerFactorBatch& b) {
  const Eigen::Index N = b.a.rows() * b.g.rows();
  Matrix out = Matrix::Zero(N, N);
  for (Eigen::Index t = 0; t < b.a.cols(); ++t) {
    Vector v(N);
    for (Eigen::Index al = 0; al < b.a.rows(); ++al)
      for (Eigen::Index ga = 0; ga < b.g.rows(); ++ga) v(b.g.rows() * al + ga) = b.a(al, t) * b.g(ga, t);
    out += v * v.transpose();
  }
  return out / static_cast<double>(b.a.cols());
}

inline NetworkSpec random_spec(Rng& rng, std::size_t max_width, Activation act = Activation::tanh) {
  std::uniform_int_distribution<std::size_t> w(1, max_width), depth(1, 3);
  NetworkSpec s;
  const std::size_t layers = depth(rng);
  for (std::size_t i = 0; i <= layers; ++i) s.layer_sizes.push_back(w(rng));
  s.activation = act;
  s.loss = Loss::mse;
  return s;
}

inline Dataset random_regression(Rng& rng, std::size_t rows, std::size_t in, std::size_t out) {
  Dataset d;
  d.x = random_matrix(rng, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(in));
  d.y = random_matrix(rng, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(out));
  return d;
}

inline double fro(const Matrix& m) { return m.norm(); }

}  // namespace sparseinf::testing
