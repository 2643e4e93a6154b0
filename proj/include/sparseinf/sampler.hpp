// SPDX-License-Identifier: Apache-2.0
//
// Analytical sampling from the sparse information form
//   Sigma^{-1} = (U_a (x) U_g) diag(lambda_L) (U_a (x) U_g)^T + diag(D)
// through a symmetrical factor F with F F^T = Sigma. Every dense object is
// L x L or factor-sized; nothing N x N is formed.
//
// With V = D^{-1/2} (U_a (x) U_g) Lambda^{1/2} and G = V^T V:
//   A_c A_c^T = G, B_c B_c^T = I + A_c^T A_c, C = A_c^{-T} (B_c - I) A_c^{-1},
//   W = I + V C V^T satisfies W W^T = I + V V^T, and F = D^{-1/2} W^{-T}.
//   W^{-T} = I - V Lc V^T with Lc = (C^{-T} + G)^{-1}.
//
// D_i = +infinity marks a deterministic coordinate: it is held at theta_MAP
// and carries zero variance. If that leaves G singular, A_c .. Lc are built
// for G restricted to its range.

#ifndef SPARSEINF_SAMPLER_HPP
#define SPARSEINF_SAMPLER_HPP

#include "sparseinf/kronlin.hpp"
#include "sparseinf/random.hpp"
#include "sparseinf/sparse.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace sparseinf {

struct GramFactors {
  Matrix A_c;
  Matrix B_c;
  Matrix C;
  Matrix Lc;
};

/// The L x L part of build_sampler, exposed so it can be timed on its own.
GramFactors factorize_gram(const Matrix& gram);

struct SamplerState {
  Matrix V_s_gram;
  Matrix A_c;
  Matrix B_c;
  Matrix C;
  Matrix Lc;
  Matrix P_c;           // Lambda^{1/2} Lc Lambda^{1/2} on the active positions
  Matrix woodbury_chol;  // chol(I + G), for marginals and quadratic forms
  Vector D_isqrt;
  Vector D_inv;
  Vector lambda_sqrt;  // active positions only
  Matrix U_a;
  Matrix U_g;
  Vector lambda_L;
  std::vector<std::size_t> active;
  Vector theta_map;
  std::string form_hash;
  std::string theta_hash;

  std::size_t size() const noexcept { return static_cast<std::size_t>(D_isqrt.size()); }
  std::size_t rank() const noexcept { return active.size(); }
};

/// Hash of every field of a sparse information form.
std::string hash_form(const SparseInfoForm& form);

SamplerState build_sampler(const SparseInfoForm& form, const Vector& theta_map);

/// theta_MAP + F x for a caller-provided standard-normal vector x.
Vector draw_from_noise(const SamplerState& state, const Eigen::Ref<const Vector>& x);

/// F x without the mean.
Vector apply_factor(const SamplerState& state, const Eigen::Ref<const Vector>& x);

/// Consumes exactly N standard normals from `rng`.
Vector draw(const SamplerState& state, Rng& rng);

/// sqrt(diag(Sigma)).
Vector marginal_std(const SamplerState& state);

/// j^T Sigma j.
double quad_form(const SamplerState& state, const Eigen::Ref<const Vector>& j);

}  // namespace sparseinf

#endif  // SPARSEINF_SAMPLER_HPP
