// SPDX-License-Identifier: Apache-2.0

#ifndef SPARSEINF_RANDOM_HPP
#define SPARSEINF_RANDOM_HPP

#include <cstdint>
#include <initializer_list>
#include <random>

namespace sparseinf {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Deterministic generator for the stream identified by (seed, ids...).
inline Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> ids = {}) {
  std::uint64_t state = mix64(seed);
  for (std::uint64_t id : ids) state = mix64(state ^ mix64(id + 0x632be59bd9b4e019ULL));
  return Rng(state);
}

}  // namespace sparseinf

#endif  // SPARSEINF_RANDOM_HPP
