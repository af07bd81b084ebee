#pragma once

#include <stdexcept>
#include <string>

namespace dgpo {

/// Input rejected by a precondition check (dimension mismatch, out-of-range
/// argument, unknown condition, ...).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A value went non-finite during evaluation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed configuration file or invalid option combination.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dgpo
