#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mclora {

/// Shape or size mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

/// Value outside the mathematical domain of an operation (log of <= 0, ...).
class DomainError : public std::domain_error {
 public:
  explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

/// A precondition of an API contract was violated by the caller.
class ContractError : public std::logic_error {
 public:
  explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

/// Matrix expected to be symmetric positive definite was not.
class NotPositiveDefiniteError : public std::runtime_error {
 public:
  NotPositiveDefiniteError(const std::string& what, std::size_t pivot)
      : std::runtime_error(what), pivot_index(pivot) {}
  std::size_t pivot_index;
};

/// Invalid or inconsistent configuration.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Iterative method failed to converge; carries the last iterate value.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double last)
      : std::runtime_error(what), last_iterate(last) {}
  double last_iterate;
};

/// Non-finite value encountered where a finite result is required.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// File or stream problem.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mclora
