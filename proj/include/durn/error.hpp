#pragma once

#include <stdexcept>
#include <string>

namespace durn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor extents (shape mismatch, bad axis, indivisible channels).
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration: bad layer/network/training settings, infeasible styles.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an API precondition (non-scalar loss, missing gradient, dtype mix).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unsupported file content.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace durn
