#pragma once

#include <stdexcept>
#include <string>

namespace dg {

// Error taxonomy maps onto the CLI exit codes: usage 1, data 2, numeric 3.

// Bad invocation or malformed experiment config.
class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid inputs: failed validation, unparsable files, impossible splits.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure during optimisation (NaN loss, divergence).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace dg
