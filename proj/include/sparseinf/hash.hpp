// SPDX-License-Identifier: Apache-2.0

#ifndef SPARSEINF_HASH_HPP
#define SPARSEINF_HASH_HPP

#include "sparseinf/kronlin.hpp"

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace sparseinf {

/// Incremental SHA-256 returning lowercase hex.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& update(const void* data, std::size_t bytes);
  Sha256& update(std::string_view s) { return update(s.data(), s.size()); }
  Sha256& update(const Matrix& m);
  Sha256& update(const Vector& v);
  Sha256& update(const std::vector<std::size_t>& idx);
  std::string hex();

 private:
  void* ctx_;
};

std::string sha256_hex(std::string_view data);

}  // namespace sparseinf

#endif  // SPARSEINF_HASH_HPP
