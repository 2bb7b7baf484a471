#pragma once

#include <stdexcept>
#include <string>

namespace rvae {

/// Tensor shapes that do not agree for an operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A NaN or infinity surfaced in a forward value, a gradient, or a loss.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(std::string where, const std::string& what)
      : std::runtime_error(what), where_(std::move(where)) {}

  /// Name of the op (or training stage) that produced the value.
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

/// Malformed or inconsistent user configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Problems with input data: missing files, bad formats, incompatible records.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IdxFormatError : public DataError {
 public:
  using DataError::DataError;
};

class IdxTruncatedError : public DataError {
 public:
  using DataError::DataError;
};

class IdxDimensionError : public DataError {
 public:
  using DataError::DataError;
};

/// Checkpoint architecture does not match the data or another checkpoint.
class ArchMismatchError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace rvae
