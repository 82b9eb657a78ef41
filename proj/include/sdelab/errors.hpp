#pragma once

#include <stdexcept>
#include <string>

namespace sdelab {

/// Base of every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller passed an argument outside an operation's contract.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// A time lies outside the interval a coefficient spec is defined on.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A perturbation matrix (B or H) was requested directly but is not present.
class AbsentCoefficientError : public Error {
 public:
  using Error::Error;
};

/// Envelope fit could not be posed (non-finite data, infeasible LP).
class FitError : public Error {
 public:
  using Error::Error;
};

/// Envelope fit data does not determine all three parameters.
class UnderdeterminedError : public FitError {
 public:
  using FitError::FitError;
};

/// A robustness smallness condition required by a solver does not hold.
class ConditionError : public Error {
 public:
  using Error::Error;
};

/// The analytic tail bound of a truncated improper integral is too large.
class TruncationError : public Error {
 public:
  TruncationError(const std::string& what, double required_t_trunc)
      : Error(what), required_t_trunc_(required_t_trunc) {}

  double required_t_trunc() const noexcept { return required_t_trunc_; }

 private:
  double required_t_trunc_;
};

/// A perturbed projection failed its idempotence audit.
class ConstructionError : public Error {
 public:
  using Error::Error;
};

/// S = P+(t0) + Q-(t0) is singular on too many paths.
class GluingError : public Error {
 public:
  using Error::Error;
};

/// Malformed configuration file; carries the 1-based line number (0 if none).
class ConfigError : public Error {
 public:
  ConfigError(const std::string& what, int line)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}

  int line() const noexcept { return line_; }

 private:
  int line_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace sdelab
