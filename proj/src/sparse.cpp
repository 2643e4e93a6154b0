// SPDX-License-Identifier: Apache-2.0

#include "sparseinf/sparse.hpp"

#include "sparseinf/errors.hpp"

#include <algorithm>
#include <numeric>

namespace sparseinf {

std::vector<std::size_t> top_k_indices(const Vector& values, std::size_t K) {
  const auto size = static_cast<std::size_t>(values.size());
  if (K < 1 || K > size) {
    throw ContractViolation("top_k_indices: K = " + std::to_string(K) + " outside [1," + std::to_string(size) + "]");
  }
  std::vector<std::size_t> order(size);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return values(static_cast<Eigen::Index>(a)) > values(static_cast<Eigen::Index>(b));
  });
  order.resize(K);
  return order;
}

SparsifiedSpectrum spectral_sparsify(const Matrix& U_A, const Matrix& U_G, const Vector& lambda, std::size_t K) {
  const auto n = static_cast<std::size_t>(U_A.rows());
  const auto m = static_cast<std::size_t>(U_G.rows());
  if (U_A.cols() != U_A.rows() || U_G.cols() != U_G.rows()) {
    throw ContractViolation("spectral_sparsify: eigenvector matrices must be square");
  }
  if (static_cast<std::size_t>(lambda.size()) != n * m) {
    throw ContractViolation("spectral_sparsify: lambda length does not match U_A (x) U_G");
  }

  // Steps 1-2: top-K eigenvalues and their (beta, zeta) decomposition.
  std::vector<bool> use_a(n, false), use_g(m, false);
  for (std::size_t idx : top_k_indices(lambda, K)) {
    const auto [beta, zeta] = kron_row_inverse(idx + 1, m);
    use_a[beta - 1] = true;
    use_g[zeta - 1] = true;
  }

  SparsifiedSpectrum out;
  out.K_requested = K;
  for (std::size_t b = 0; b < n; ++b) {
    if (use_a[b]) out.kept_A.push_back(b + 1);
  }
  for (std::size_t z = 0; z < m; ++z) {
    if (use_g[z]) out.kept_G.push_back(z + 1);
  }

  // Step 3: column subsets.
  const auto a = static_cast<Eigen::Index>(out.kept_A.size());
  const auto g = static_cast<Eigen::Index>(out.kept_G.size());
  out.U_a.resize(U_A.rows(), a);
  out.U_g.resize(U_G.rows(), g);
  for (Eigen::Index p = 0; p < a; ++p) out.U_a.col(p) = U_A.col(static_cast<Eigen::Index>(out.kept_A[p] - 1));
  for (Eigen::Index q = 0; q < g; ++q) out.U_g.col(q) = U_G.col(static_cast<Eigen::Index>(out.kept_G[q] - 1));

  // Steps 4-5: every eigenvalue on the kept cross product, in Kronecker
  // column order.
  out.lambda_L.resize(a * g);
  for (Eigen::Index p = 0; p < a; ++p) {
    for (Eigen::Index q = 0; q < g; ++q) {
      const std::size_t j = kron_row_index(out.kept_A[p], out.kept_G[q], m);
      out.lambda_L(g * p + q) = lambda(static_cast<Eigen::Index>(j - 1));
    }
  }
  return out;
}

SparseInfoForm assemble_inf(const SparsifiedSpectrum& spectrum, const Vector& exact_diag) {
  const Eigen::Index N = spectrum.U_a.rows() * spectrum.U_g.rows();
  if (exact_diag.size() != N) throw ContractViolation("assemble_inf: exact diagonal has the wrong length");
  SparseInfoForm form;
  form.U_a = spectrum.U_a;
  form.U_g = spectrum.U_g;
  form.lambda_L = spectrum.lambda_L;
  form.kept_A = spectrum.kept_A;
  form.kept_G = spectrum.kept_G;
  form.K_requested = spectrum.K_requested;
  form.exact_diag = exact_diag;
  form.D = diagonal_correction(exact_diag, efb_diagonal(form.U_a, form.U_g, form.lambda_L));
  form.active.resize(form.L());
  std::iota(form.active.begin(), form.active.end(), std::size_t{0});
  return form;
}

SparseInfoForm sparsify_layer(const KronEigenbasis& basis, std::size_t K) {
  return assemble_inf(spectral_sparsify(basis.U_A, basis.U_G, basis.lambda, K), basis.exact_diag);
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::valid: return "valid";
    case Verdict::repaired: return "repaired";
    case Verdict::degenerate: return "degenerate";
  }
  return "?";
}

ValidityReport check_validity(const SparseInfoForm& form, double eps) {
  if (!(eps > 0.0)) throw ContractViolation("check_validity: eps must be positive");
  ValidityReport r;
  r.form = form;
  for (Eigen::Index i = 0; i < form.D.size(); ++i) {
    if (form.exact_diag(i) == 0.0) ++r.zero_diagonal;
    if (!(form.D(i) > 0.0)) {
      r.form.D(i) = eps;
      ++r.clipped_d;
    }
  }
  r.form.active.clear();
  for (std::size_t p : form.active) {
    if (form.lambda_L(static_cast<Eigen::Index>(p)) > 0.0) {
      r.form.active.push_back(p);
    } else {
      ++r.dropped_eigenvalues;
    }
  }
  r.dropped_eigenvalues += form.L() - form.active.size();
  if (r.zero_diagonal > 0) {
    r.verdict = Verdict::degenerate;
  } else if (r.clipped_d > 0 || r.dropped_eigenvalues > 0) {
    r.verdict = Verdict::repaired;
  } else {
    r.verdict = Verdict::valid;
  }
  return r;
}

Matrix materialize_low_rank(const SparseInfoForm& form) { return materialize_efb(form.U_a, form.U_g, form.lambda_L); }

Matrix materialize_inf(const SparseInfoForm& form) {
  Matrix out = materialize_low_rank(form);
  out.diagonal() += form.D;
  return out;
}

}  // namespace sparseinf
