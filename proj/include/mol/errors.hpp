#pragma once

#include <stdexcept>
#include <string>

namespace mol {

// Operand extents disagree.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Numerical routine produced NaN/Inf or could not make progress.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A backward pass was requested against a cache recorded for different weights.
class StaleCacheError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Parameters outside the region where a bound or iteration is defined.
class InfeasibleError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Bad experiment configuration; `line` is 1-based, 0 when unknown.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& message, int line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + message : message),
        line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

}  // namespace mol
