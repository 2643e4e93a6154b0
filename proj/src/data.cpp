// SPDX-License-Identifier: Apache-2.0

#include "sparseinf/data.hpp"

#include "sparseinf/errors.hpp"

namespace sparseinf {

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
  Dataset out;
  out.classification = classification;
  out.x.resize(static_cast<Eigen::Index>(rows.size()), x.cols());
  if (!classification) out.y.resize(static_cast<Eigen::Index>(rows.size()), y.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] >= size()) throw ContractViolation("Dataset::subset: row out of range");
    const auto r = static_cast<Eigen::Index>(rows[k]);
    out.x.row(static_cast<Eigen::Index>(k)) = x.row(r);
    if (classification) {
      out.labels.push_back(labels[rows[k]]);
    } else {
      out.y.row(static_cast<Eigen::Index>(k)) = y.row(r);
    }
  }
  return out;
}

void Dataset::append(const Dataset& other) {
  if (size() == 0) {
    *this = other;
    return;
  }
  if (other.classification != classification || other.x.cols() != x.cols() ||
      (!classification && other.y.cols() != y.cols())) {
    throw ContractViolation("Dataset::append: incompatible datasets");
  }
  Matrix nx(x.rows() + other.x.rows(), x.cols());
  nx << x, other.x;
  x = std::move(nx);
  if (classification) {
    labels.insert(labels.end(), other.labels.begin(), other.labels.end());
  } else {
    Matrix ny(y.rows() + other.y.rows(), y.cols());
    ny << y, other.y;
    y = std::move(ny);
  }
}

Dataset make_toy_cubic(Rng& rng, std::size_t n_points, double lo, double hi) {
  std::uniform_real_distribution<double> ux(lo, hi);
  std::normal_distribution<double> noise(0.0, 3.0);
  Dataset d;
  d.x.resize(static_cast<Eigen::Index>(n_points), 1);
  d.y.resize(static_cast<Eigen::Index>(n_points), 1);
  for (Eigen::Index i = 0; i < d.x.rows(); ++i) {
    const double xi = ux(rng);
    d.x(i, 0) = xi;
    d.y(i, 0) = xi * xi * xi + noise(rng);
  }
  return d;
}

Dataset make_toy_cubic(std::uint64_t seed, std::size_t n_points) {
  Rng rng = make_stream(seed, {0x746f79});
  return make_toy_cubic(rng, n_points, -4.0, 4.0);
}

Dataset make_grid(double lo, double hi, std::size_t n_points) {
  Dataset d;
  d.x.resize(static_cast<Eigen::Index>(n_points), 1);
  d.y.resize(static_cast<Eigen::Index>(n_points), 1);
  for (std::size_t i = 0; i < n_points; ++i) {
    const double t = n_points == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n_points - 1);
    const double xi = lo + t * (hi - lo);
    d.x(static_cast<Eigen::Index>(i), 0) = xi;
    d.y(static_cast<Eigen::Index>(i), 0) = xi * xi * xi;
  }
  return d;
}

}  // namespace sparseinf
