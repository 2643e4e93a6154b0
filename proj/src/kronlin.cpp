// SPDX-License-Identifier: Apache-2.0

#include "sparseinf/kronlin.hpp"

#include "sparseinf/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace sparseinf {

namespace {

void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() < 1) {
    throw ContractViolation(std::string(what) + ": expected a non-empty square matrix, got " +
                            std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
  if (!m.allFinite()) {
    throw ContractViolation(std::string(what) + ": matrix has non-finite entries");
  }
}

}  // namespace

bool is_symmetric(const Matrix& m, double tol) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = j + 1; i < m.rows(); ++i) {
      if (std::abs(m(i, j) - m(j, i)) > tol * scale) return false;
    }
  }
  return true;
}

EigPair sym_eig(const Matrix& m) {
  require_square(m, "sym_eig");
  if (!is_symmetric(m, 1e-12)) throw ContractViolation("sym_eig: matrix is not symmetric");

  Eigen::SelfAdjointEigenSolver<Matrix> solver(m);
  if (solver.info() != Eigen::Success) {
    throw ConvergenceFailure("sym_eig: eigensolver did not converge", std::numeric_limits<double>::infinity());
  }

  // The solver returns ascending values; reorder to descending with ties kept
  // in original index order.
  const Eigen::Index n = m.rows();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const Vector& asc = solver.eigenvalues();
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return asc(a) > asc(b); });

  EigPair out{Matrix(n, n), Vector(n)};
  for (Eigen::Index k = 0; k < n; ++k) {
    out.values(k) = asc(order[static_cast<std::size_t>(k)]);
    out.vectors.col(k) = solver.eigenvectors().col(order[static_cast<std::size_t>(k)]);
  }

  const Matrix back = out.vectors * out.values.asDiagonal() * out.vectors.transpose();
  const double residual = (back - m).norm() / std::max(m.norm(), std::numeric_limits<double>::min());
  if (m.norm() > 0.0 && residual > 1e-8) {
    throw ConvergenceFailure("sym_eig: reconstruction check failed", residual);
  }
  return out;
}

EigPair sym_eig_psd(const Matrix& m) {
  EigPair e = sym_eig(m);
  const double scale = std::max(1.0, e.values.cwiseAbs().maxCoeff());
  for (Eigen::Index k = 0; k < e.values.size(); ++k) {
    if (e.values(k) < 0.0 && e.values(k) >= -1e-10 * scale) e.values(k) = 0.0;
  }
  return e;
}

Matrix cholesky(const Matrix& m) {
  require_square(m, "cholesky");
  const Eigen::Index n = m.rows();
  Matrix l = Matrix::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double pivot = m(j, j) - l.row(j).head(j).squaredNorm();
    if (!(pivot > 0.0)) throw PositiveDefinitenessViolation(static_cast<std::size_t>(j + 1), pivot);
    const double ljj = std::sqrt(pivot);
    l(j, j) = ljj;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      l(i, j) = (m(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / ljj;
    }
  }
  return l;
}

std::size_t KronIndex::row(std::size_t alpha, std::size_t gamma) const {
  if (alpha < 1 || alpha > n || gamma < 1 || gamma > m) {
    throw ContractViolation("KronIndex::row: index (" + std::to_string(alpha) + ", " + std::to_string(gamma) +
                            ") outside [1," + std::to_string(n) + "]x[1," + std::to_string(m) + "]");
  }
  return m * (alpha - 1) + gamma;
}

std::pair<std::size_t, std::size_t> KronIndex::split(std::size_t i) const {
  if (i < 1 || i > n * m) {
    throw ContractViolation("KronIndex::split: index " + std::to_string(i) + " outside [1," +
                            std::to_string(n * m) + "]");
  }
  return kron_row_inverse(i, m);
}

std::size_t kron_row_index(std::size_t alpha, std::size_t gamma, std::size_t m) {
  if (m < 1 || alpha < 1 || gamma < 1 || gamma > m) {
    throw ContractViolation("kron_row_index: index out of range");
  }
  return m * (alpha - 1) + gamma;
}

std::pair<std::size_t, std::size_t> kron_row_inverse(std::size_t i, std::size_t m) {
  if (m < 1 || i < 1) throw ContractViolation("kron_row_inverse: index out of range");
  const std::size_t beta = (i - 1) / m + 1;
  return {beta, i - m * (beta - 1)};
}

Vector kron_apply(const Matrix& u_left, const Matrix& u_right, const Eigen::Ref<const Vector>& x,
                  bool transpose) {
  const Eigen::Index n = u_left.rows();
  const Eigen::Index a = u_left.cols();
  const Eigen::Index m = u_right.rows();
  const Eigen::Index g = u_right.cols();
  if (transpose) {
    if (x.size() != n * m) {
      throw ContractViolation("kron_apply: transposed input length " + std::to_string(x.size()) +
                              " != " + std::to_string(n * m));
    }
    Eigen::Map<const Matrix> xm(x.data(), m, n);
    Vector out(a * g);
    Eigen::Map<Matrix>(out.data(), g, a).noalias() = u_right.transpose() * xm * u_left;
    return out;
  }
  if (x.size() != a * g) {
    throw ContractViolation("kron_apply: input length " + std::to_string(x.size()) + " != " +
                            std::to_string(a * g));
  }
  Eigen::Map<const Matrix> xm(x.data(), g, a);
  Vector out(n * m);
  Eigen::Map<Matrix>(out.data(), m, n).noalias() = u_right * xm * u_left.transpose();
  return out;
}

Matrix kron_materialize(const Matrix& left, const Matrix& right) {
  Matrix out(left.rows() * right.rows(), left.cols() * right.cols());
  for (Eigen::Index i = 0; i < left.rows(); ++i) {
    for (Eigen::Index j = 0; j < left.cols(); ++j) {
      out.block(i * right.rows(), j * right.cols(), right.rows(), right.cols()) = left(i, j) * right;
    }
  }
  return out;
}

double rel_frobenius(const Matrix& a, const Matrix& b) {
  return (a - b).norm() / std::max(b.norm(), std::numeric_limits<double>::min());
}

}  // namespace sparseinf
