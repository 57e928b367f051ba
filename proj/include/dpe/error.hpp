#pragma once

#include <stdexcept>
#include <string>

namespace dpe {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Plane shapes that do not agree with an operator or with each other.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Iterative solver failed to reach its tolerance.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Malformed file contents (images, kernels, weights).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// File cannot be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration key, value or constraint.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace dpe
