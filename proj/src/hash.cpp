// SPDX-License-Identifier: Apache-2.0

#include "sparseinf/hash.hpp"

#include "sparseinf/errors.hpp"

#include <openssl/evp.h>

#include <cstdint>

namespace sparseinf {

Sha256::Sha256() : ctx_(EVP_MD_CTX_new()) {
  if (ctx_ == nullptr || EVP_DigestInit_ex(static_cast<EVP_MD_CTX*>(ctx_), EVP_sha256(), nullptr) != 1) {
    throw Error("sha256: digest initialisation failed");
  }
}

Sha256::~Sha256() { EVP_MD_CTX_free(static_cast<EVP_MD_CTX*>(ctx_)); }

Sha256& Sha256::update(const void* data, std::size_t bytes) {
  EVP_DigestUpdate(static_cast<EVP_MD_CTX*>(ctx_), data, bytes);
  return *this;
}

Sha256& Sha256::update(const Matrix& m) {
  const std::int64_t shape[2] = {m.rows(), m.cols()};
  update(shape, sizeof(shape));
  return update(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
}

Sha256& Sha256::update(const Vector& v) {
  const std::int64_t len = v.size();
  update(&len, sizeof(len));
  return update(v.data(), sizeof(double) * static_cast<std::size_t>(v.size()));
}

Sha256& Sha256::update(const std::vector<std::size_t>& idx) {
  const std::int64_t len = static_cast<std::int64_t>(idx.size());
  update(&len, sizeof(len));
  for (std::size_t i : idx) {
    const std::uint64_t v = i;
    update(&v, sizeof(v));
  }
  return *this;
}

std::string Sha256::hex() {
  unsigned char out[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(static_cast<EVP_MD_CTX*>(ctx_), out, &len);
  static constexpr char digits[] = "0123456789abcdef";
  std::string s;
  s.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    s.push_back(digits[out[i] >> 4]);
    s.push_back(digits[out[i] & 0xf]);
  }
  return s;
}

std::string sha256_hex(std::string_view data) {
  Sha256 h;
  h.update(data);
  return h.hex();
}

}  // namespace sparseinf
