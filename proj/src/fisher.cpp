// SPDX-License-Identifier: Apache-2.0

#include "sparseinf/fisher.hpp"

#include "sparseinf/errors.hpp"

#include <string>

namespace sparseinf {

ExactBlockIM exact_block_im(const LayerFactorBatch& batch, std::size_t cap) {
  batch.validate();
  const std::size_t n_params = batch.n() * batch.m();
  if (n_params > cap) {
    throw ContractViolation("exact_block_im: " + std::to_string(n_params) + " parameters exceed the cap of " +
                            std::to_string(cap));
  }
  const auto N = static_cast<Eigen::Index>(n_params);
  Matrix grads(N, static_cast<Eigen::Index>(batch.count()));
  for (std::size_t t = 0; t < batch.count(); ++t) grads.col(static_cast<Eigen::Index>(t)) = batch.sample_gradient(t);
  ExactBlockIM out;
  out.count = batch.count();
  out.matrix = Matrix::Zero(N, N);
  out.matrix.selfadjointView<Eigen::Lower>().rankUpdate(grads, 1.0 / static_cast<double>(batch.count()));
  out.matrix.triangularView<Eigen::StrictlyUpper>() = out.matrix.transpose();
  return out;
}

KfacAccumulator::KfacAccumulator(std::size_t n, std::size_t m)
    : a_sum_(Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n))),
      g_sum_(Matrix::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m))),
      sq_sum_(Matrix::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n))) {}

void KfacAccumulator::add(const LayerFactorBatch& batch) {
  batch.validate();
  if (batch.a.rows() != a_sum_.rows() || batch.g.rows() != g_sum_.rows()) {
    throw ContractViolation("KfacAccumulator::add: factor shapes do not match");
  }
  a_sum_.noalias() += batch.a * batch.a.transpose();
  g_sum_.noalias() += batch.g * batch.g.transpose();
  // sum_t (g_t a_t^T)^2 elementwise = (g o g)(a o a)^T
  sq_sum_.noalias() += batch.g.cwiseAbs2() * batch.a.cwiseAbs2().transpose();
  count_ += batch.count();
}

void KfacAccumulator::merge(const KfacAccumulator& other) {
  if (other.a_sum_.rows() != a_sum_.rows() || other.g_sum_.rows() != g_sum_.rows()) {
    throw ContractViolation("KfacAccumulator::merge: shapes do not match");
  }
  a_sum_ += other.a_sum_;
  g_sum_ += other.g_sum_;
  sq_sum_ += other.sq_sum_;
  count_ += other.count_;
}

KronFactors KfacAccumulator::factors() const {
  if (count_ == 0) throw ContractViolation("KfacAccumulator: no samples");
  const double inv = 1.0 / static_cast<double>(count_);
  KronFactors k{a_sum_ * inv, g_sum_ * inv};
  // Enforce exact symmetry; the products above are symmetric up to rounding.
  k.A = 0.5 * (k.A + k.A.transpose()).eval();
  k.G = 0.5 * (k.G + k.G.transpose()).eval();
  return k;
}

Vector KfacAccumulator::exact_diag() const {
  if (count_ == 0) throw ContractViolation("KfacAccumulator: no samples");
  return Eigen::Map<const Vector>(sq_sum_.data(), sq_sum_.size()) / static_cast<double>(count_);
}

EigenvalueAccumulator::EigenvalueAccumulator(Matrix u_a, Matrix u_g)
    : u_a_(std::move(u_a)), u_g_(std::move(u_g)), sum_(Vector::Zero(u_a_.cols() * u_g_.cols())) {}

void EigenvalueAccumulator::add(const LayerFactorBatch& batch) {
  batch.validate();
  if (batch.a.rows() != u_a_.rows() || batch.g.rows() != u_g_.rows()) {
    throw ContractViolation("EigenvalueAccumulator::add: factor shapes do not match");
  }
  for (std::size_t t = 0; t < batch.count(); ++t) {
    sum_ += kron_apply(u_a_, u_g_, batch.sample_gradient(t), /*transpose=*/true).cwiseAbs2();
  }
  count_ += batch.count();
}

void EigenvalueAccumulator::merge(const EigenvalueAccumulator& other) {
  if (other.sum_.size() != sum_.size()) throw ContractViolation("EigenvalueAccumulator::merge: shapes differ");
  sum_ += other.sum_;
  count_ += other.count_;
}

Vector EigenvalueAccumulator::lambda() const {
  if (count_ == 0) throw ContractViolation("EigenvalueAccumulator: no samples");
  return sum_ / static_cast<double>(count_);
}

KronFactors kfac(const LayerFactorBatch& batch) {
  KfacAccumulator acc(batch.n(), batch.m());
  acc.add(batch);
  return acc.factors();
}

Vector diag_fisher(const LayerFactorBatch& batch) {
  KfacAccumulator acc(batch.n(), batch.m());
  acc.add(batch);
  return acc.exact_diag();
}

EfbSpectrum efb(const KronFactors& kron, const LayerFactorBatch& batch) {
  EigPair ea = sym_eig_psd(kron.A);
  EigPair eg = sym_eig_psd(kron.G);
  EigenvalueAccumulator acc(ea.vectors, eg.vectors);
  acc.add(batch);
  return EfbSpectrum{std::move(ea.vectors), std::move(eg.vectors), std::move(ea.values), std::move(eg.values),
                     acc.lambda()};
}

Vector efb_diagonal(const Matrix& u_left, const Matrix& u_right, const Vector& lambda) {
  if (lambda.size() != u_left.cols() * u_right.cols()) {
    throw ContractViolation("efb_diagonal: lambda has length " + std::to_string(lambda.size()) + ", expected " +
                            std::to_string(u_left.cols() * u_right.cols()));
  }
  // Row i = m(alpha-1)+gamma of V = U_left (x) U_right has entries
  // U_left(alpha, beta) * U_right(gamma, zeta), so
  //   sum_j V_ij^2 lambda_j = sum_{beta,zeta} U_left(alpha,beta)^2 U_right(gamma,zeta)^2 lambda_{beta,zeta},
  // which is the Kronecker map of the squared factors applied to lambda.
  return kron_apply(u_left.cwiseAbs2(), u_right.cwiseAbs2(), lambda, /*transpose=*/false);
}

Vector diagonal_correction(const Vector& exact_diag, const Vector& efb_diag) {
  if (exact_diag.size() != efb_diag.size()) throw ContractViolation("diagonal_correction: length mismatch");
  return exact_diag - efb_diag;
}

KronEigenbasis build_eigenbasis(const LayerFactorBatch& batch) {
  KfacAccumulator first(batch.n(), batch.m());
  first.add(batch);
  EfbSpectrum spec = efb(first.factors(), batch);
  KronEigenbasis out;
  out.count = batch.count();
  out.exact_diag = first.exact_diag();
  out.D = diagonal_correction(out.exact_diag, efb_diagonal(spec.U_A, spec.U_G, spec.lambda));
  out.U_A = std::move(spec.U_A);
  out.U_G = std::move(spec.U_G);
  out.s_A = std::move(spec.s_A);
  out.s_G = std::move(spec.s_G);
  out.lambda = std::move(spec.lambda);
  return out;
}

Matrix materialize_kfac(const KronFactors& k) { return kron_materialize(k.A, k.G); }

Matrix materialize_efb(const Matrix& u_left, const Matrix& u_right, const Vector& lambda) {
  const Matrix v = kron_materialize(u_left, u_right);
  return v * lambda.asDiagonal() * v.transpose();
}

}  // namespace sparseinf
