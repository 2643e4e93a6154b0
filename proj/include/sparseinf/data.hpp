// SPDX-License-Identifier: Apache-2.0

#ifndef SPARSEINF_DATA_HPP
#define SPARSEINF_DATA_HPP

#include "sparseinf/kronlin.hpp"
#include "sparseinf/random.hpp"

#include <cstddef>
#include <cstdint>
#include <vector>

namespace sparseinf {

/// Rows are samples. Regression targets live in `y` (one column per output);
/// classification stores integer labels and leaves `y` empty.
struct Dataset {
  Matrix x;
  Matrix y;
  std::vector<int> labels;
  bool classification = false;

  std::size_t size() const noexcept { return static_cast<std::size_t>(x.rows()); }
  std::size_t input_dim() const noexcept { return static_cast<std::size_t>(x.cols()); }

  Dataset subset(const std::vector<std::size_t>& rows) const;
  void append(const Dataset& other);
};

/// x ~ U(-4, 4), y = x^3 + eps with eps ~ N(0, 3^2).
Dataset make_toy_cubic(std::uint64_t seed, std::size_t n_points);

/// Same recipe with x drawn from U(lo, hi).
Dataset make_toy_cubic(Rng& rng, std::size_t n_points, double lo, double hi);

/// Evenly spaced 1-D inputs on [lo, hi], targets x^3 (noise free).
Dataset make_grid(double lo, double hi, std::size_t n_points);

}  // namespace sparseinf

#endif  // SPARSEINF_DATA_HPP
