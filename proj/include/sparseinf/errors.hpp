// SPDX-License-Identifier: Apache-2.0

#ifndef SPARSEINF_ERRORS_HPP
#define SPARSEINF_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sparseinf {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on shapes, ranges or enum values was not met by the caller.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// Cholesky hit a non-positive pivot. `pivot` is 1-based.
class PositiveDefinitenessViolation : public Error {
 public:
  PositiveDefinitenessViolation(std::size_t pivot, double value)
      : Error("matrix is not positive definite: pivot " + std::to_string(pivot) +
              " has value " + std::to_string(value)),
        pivot_(pivot),
        value_(value) {}

  std::size_t pivot() const noexcept { return pivot_; }
  double value() const noexcept { return value_; }

 private:
  std::size_t pivot_;
  double value_;
};

/// A non-finite value appeared during a forward or backward pass.
class NumericFailure : public Error {
 public:
  NumericFailure(std::size_t layer, const std::string& what)
      : Error("non-finite value in layer " + std::to_string(layer) + ": " + what),
        layer_(layer) {}

  std::size_t layer() const noexcept { return layer_; }

 private:
  std::size_t layer_;
};

class ConvergenceFailure : public Error {
 public:
  ConvergenceFailure(const std::string& what, double residual)
      : Error(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}

  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

class TrainingFailure : public Error {
 public:
  TrainingFailure(std::size_t epoch, const std::string& what)
      : Error("training failed at epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}

  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace sparseinf

#endif  // SPARSEINF_ERRORS_HPP
