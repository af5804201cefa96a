#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace quenchstat {

/// Invalid argument or inconsistent configuration. CLI exit code 2.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Request exceeds a resource guard (e.g. dense diagonalization size).
class ResourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Iterative eigensolver failed to reach the residual tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> residuals)
      : std::runtime_error(what), residuals_(std::move(residuals)) {}

  const std::vector<double>& residuals() const noexcept { return residuals_; }

 private:
  std::vector<double> residuals_;
};

/// Linear algebra backend produced an inconsistent result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Spectral expansion of the initial state misses too much weight.
class TruncationError : public std::runtime_error {
 public:
  TruncationError(const std::string& what, double coverage)
      : std::runtime_error(what), coverage_(coverage) {}

  double coverage() const noexcept { return coverage_; }

 private:
  double coverage_;
};

}  // namespace quenchstat
