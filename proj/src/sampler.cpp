// SPDX-License-Identifier: Apache-2.0

#include "sparseinf/sampler.hpp"

#include "sparseinf/errors.hpp"
#include "sparseinf/hash.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sparseinf {

namespace {

// Rotated coordinates restricted to the active set: Lambda^{1/2} [(U_a (x) U_g)^T y]_active.
Vector project(const SamplerState& s, const Vector& y) {
  const Vector full = kron_apply(s.U_a, s.U_g, y, /*transpose=*/true);
  Vector out(static_cast<Eigen::Index>(s.active.size()));
  for (std::size_t k = 0; k < s.active.size(); ++k) {
    out(static_cast<Eigen::Index>(k)) = full(static_cast<Eigen::Index>(s.active[k]));
  }
  return out.cwiseProduct(s.lambda_sqrt);
}

// (U_a (x) U_g) scattered(Lambda^{1/2} z)
Vector lift(const SamplerState& s, const Vector& z) {
  Vector full = Vector::Zero(s.lambda_L.size());
  for (std::size_t k = 0; k < s.active.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    full(static_cast<Eigen::Index>(s.active[k])) = s.lambda_sqrt(kk) * z(kk);
  }
  return kron_apply(s.U_a, s.U_g, full, /*transpose=*/false);
}

}  // namespace

GramFactors factorize_gram(const Matrix& gram) {
  const Eigen::Index L = gram.rows();
  GramFactors f;
  f.A_c = cholesky(gram);
  Matrix s = Matrix::Identity(L, L);
  s.noalias() += f.A_c.transpose() * f.A_c;
  f.B_c = cholesky(s);

  // C = A^{-T} (B - I) A^{-1}
  Matrix bm = f.B_c - Matrix::Identity(L, L);
  const Matrix a_t = f.A_c.transpose();
  const auto upper = a_t.triangularView<Eigen::Upper>();
  Matrix right = upper.solve(bm.transpose()).transpose();  // (B - I) A^{-1}
  f.C = upper.solve(right);

  // Lc = (C^{-T} + G)^{-1} = (I + C^T G)^{-1} C^T, which stays finite as C -> 0.
  Matrix lhs = Matrix::Identity(L, L);
  lhs.noalias() += f.C.transpose() * gram;
  f.Lc = lhs.partialPivLu().solve(f.C.transpose());
  return f;
}

std::string hash_form(const SparseInfoForm& form) {
  Sha256 h;
  h.update(form.U_a).update(form.U_g).update(form.lambda_L).update(form.D).update(form.exact_diag);
  h.update(form.kept_A).update(form.kept_G).update(form.active);
  const std::uint64_t k = form.K_requested;
  h.update(&k, sizeof(k));
  return h.hex();
}

SamplerState build_sampler(const SparseInfoForm& form, const Vector& theta_map) {
  const auto N = static_cast<Eigen::Index>(form.size());
  if (form.D.size() != N || theta_map.size() != N) {
    throw ContractViolation("build_sampler: D and theta_MAP must have length " + std::to_string(N));
  }
  if (static_cast<std::size_t>(form.U_a.cols() * form.U_g.cols()) != form.L()) {
    throw ContractViolation("build_sampler: lambda_L does not match the kept eigenvectors");
  }
  SamplerState s;
  s.D_isqrt.resize(N);
  s.D_inv.resize(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const double d = form.D(i);
    if (!(d > 0.0)) {
      throw ContractViolation("build_sampler: D[" + std::to_string(i) + "] = " + std::to_string(d) +
                              " is not positive; run check_validity first");
    }
    s.D_isqrt(i) = std::isinf(d) ? 0.0 : 1.0 / std::sqrt(d);
    s.D_inv(i) = std::isinf(d) ? 0.0 : 1.0 / d;
  }
  s.U_a = form.U_a;
  s.U_g = form.U_g;
  s.lambda_L = form.lambda_L;
  s.active = form.active;
  s.theta_map = theta_map;
  const auto L = static_cast<Eigen::Index>(s.active.size());
  s.lambda_sqrt.resize(L);
  for (Eigen::Index k = 0; k < L; ++k) {
    const std::size_t p = s.active[static_cast<std::size_t>(k)];
    if (p >= form.L()) throw ContractViolation("build_sampler: active index out of range");
    const double lam = form.lambda_L(static_cast<Eigen::Index>(p));
    if (!(lam > 0.0) || !std::isfinite(lam)) {
      throw ContractViolation("build_sampler: active eigenvalue " + std::to_string(p) + " is not positive");
    }
    s.lambda_sqrt(k) = std::sqrt(lam);
  }

  // G = V^T V one column at a time: column k is V^T (V e_k).
  s.V_s_gram.resize(L, L);
  Vector unit = Vector::Zero(L);
  for (Eigen::Index k = 0; k < L; ++k) {
    unit(k) = 1.0;
    const Vector col = lift(s, unit).cwiseProduct(s.D_inv);
    s.V_s_gram.col(k) = project(s, col);
    unit(k) = 0.0;
  }
  s.V_s_gram = (0.5 * (s.V_s_gram + s.V_s_gram.transpose())).eval();

  if (L > 0) {
    // Fixed coordinates can leave V without full column rank; the factor is
    // then built on the range of G, which leaves V V^T unchanged.
    Matrix range;
    if (form.D.array().isInf().any()) {
      EigPair e = sym_eig_psd(s.V_s_gram);
      const double cut = 1e-12 * std::max(e.values(0), 0.0);
      Eigen::Index r = 0;
      while (r < L && e.values(r) > cut) ++r;
      if (r < L) range = e.vectors.leftCols(r);
    }
    GramFactors f = factorize_gram(range.size() ? Matrix(range.transpose() * s.V_s_gram * range) : s.V_s_gram);
    s.A_c = std::move(f.A_c);
    s.B_c = std::move(f.B_c);
    s.C = std::move(f.C);
    s.Lc = std::move(f.Lc);
    Matrix ig = Matrix::Identity(L, L) + s.V_s_gram;
    s.woodbury_chol = cholesky(ig);
    if (range.size()) {
      s.P_c = s.lambda_sqrt.asDiagonal() * (range * s.Lc * range.transpose()) * s.lambda_sqrt.asDiagonal();
    } else {
      s.P_c = s.lambda_sqrt.asDiagonal() * s.Lc * s.lambda_sqrt.asDiagonal();
    }
  } else {
    s.A_c = s.B_c = s.C = s.Lc = s.woodbury_chol = s.P_c = Matrix(0, 0);
  }

  s.form_hash = hash_form(form);
  Sha256 th;
  th.update(theta_map);
  s.theta_hash = th.hex();
  return s;
}

Vector apply_factor(const SamplerState& s, const Eigen::Ref<const Vector>& x) {
  if (x.size() != static_cast<Eigen::Index>(s.size())) throw ContractViolation("apply_factor: wrong noise length");
  // F x = X_D - D^{-1} U P U^T X_D with X_D = D^{-1/2} x.
  const Vector x_d = x.cwiseProduct(s.D_isqrt);
  if (s.active.empty()) return x_d;
  const Vector full = kron_apply(s.U_a, s.U_g, x_d, /*transpose=*/true);
  Vector z(static_cast<Eigen::Index>(s.active.size()));
  for (std::size_t k = 0; k < s.active.size(); ++k) {
    z(static_cast<Eigen::Index>(k)) = full(static_cast<Eigen::Index>(s.active[k]));
  }
  const Vector pz = s.P_c * z;
  Vector back = Vector::Zero(s.lambda_L.size());
  for (std::size_t k = 0; k < s.active.size(); ++k) {
    back(static_cast<Eigen::Index>(s.active[k])) = pz(static_cast<Eigen::Index>(k));
  }
  return x_d - kron_apply(s.U_a, s.U_g, back, /*transpose=*/false).cwiseProduct(s.D_inv);
}

Vector draw_from_noise(const SamplerState& s, const Eigen::Ref<const Vector>& x) {
  return s.theta_map + apply_factor(s, x);
}

Vector draw(const SamplerState& s, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector x(static_cast<Eigen::Index>(s.size()));
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = normal(rng);
  return draw_from_noise(s, x);
}

Vector marginal_std(const SamplerState& s) {
  const auto N = static_cast<Eigen::Index>(s.size());
  const auto L = static_cast<Eigen::Index>(s.active.size());
  const std::size_t m = static_cast<std::size_t>(s.U_g.rows());
  const Eigen::Index g = s.U_g.cols();
  Vector out(N);
  Vector r(L);
  const auto chol = s.woodbury_chol.triangularView<Eigen::Lower>();
  for (Eigen::Index i = 0; i < N; ++i) {
    const double d = s.D_isqrt(i);
    if (d == 0.0) {
      out(i) = 0.0;
      continue;
    }
    // Sigma_ii = d_i^2 (1 - r^T (I + G)^{-1} r), r = row i of V.
    const auto [alpha, gamma] = kron_row_inverse(static_cast<std::size_t>(i) + 1, m);
    for (Eigen::Index k = 0; k < L; ++k) {
      const auto pos = static_cast<Eigen::Index>(s.active[static_cast<std::size_t>(k)]);
      r(k) = d * s.lambda_sqrt(k) * s.U_a(static_cast<Eigen::Index>(alpha - 1), pos / g) *
             s.U_g(static_cast<Eigen::Index>(gamma - 1), pos % g);
    }
    const double reduction = L > 0 ? chol.solve(r).squaredNorm() : 0.0;
    out(i) = d * std::sqrt(std::max(0.0, 1.0 - reduction));
  }
  return out;
}

double quad_form(const SamplerState& s, const Eigen::Ref<const Vector>& j) {
  if (j.size() != static_cast<Eigen::Index>(s.size())) throw ContractViolation("quad_form: wrong length");
  const Vector j_d = j.cwiseProduct(s.D_isqrt);
  double total = j_d.squaredNorm();
  if (!s.active.empty()) {
    const Vector v = project(s, j.cwiseProduct(s.D_inv));  // V^T j_d
    total -= s.woodbury_chol.triangularView<Eigen::Lower>().solve(v).squaredNorm();
  }
  return std::max(0.0, total);
}

}  // namespace sparseinf
