#pragma once

#include <stdexcept>
#include <string>

namespace rde {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

/// Invalid or inconsistent run configuration (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A pipeline stage found a missing or stale input artifact (CLI exit code 3).
class StageInputError : public Error {
 public:
  using Error::Error;
};

/// Base for numerical failures (CLI exit code 4).
class NumericalError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public NumericalError {
 public:
  TrainingError(const std::string& what, int epoch)
      : NumericalError(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

class BracketError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& what, double residual)
      : NumericalError(what + " (final residual " + std::to_string(residual) + ")"),
        residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

class ModelValidityError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace rde
