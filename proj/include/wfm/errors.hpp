#pragma once

#include <stdexcept>
#include <string>

namespace wfm {

// Invalid input data, configuration, or out-of-range arguments.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Failures that arise while computing (integration, root finding, fitting).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public DataError {
 public:
  using DataError::DataError;
};

class ConfigError : public DataError {
 public:
  using DataError::DataError;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : DataError(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  /// 1-based line of the offending input, 0 when not tied to a line.
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class DegenerateParametersError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class GeometryRangeError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class NoEquilibriumError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class IntegrationError : public NumericalError {
 public:
  IntegrationError(const std::string& what, double time)
      : NumericalError(what + " (t = " + std::to_string(time) + " s)"), time_(time) {}

  double time() const noexcept { return time_; }

 private:
  double time_;
};

}  // namespace wfm
