#pragma once

#include <stdexcept>
#include <string>

namespace netscope {

// Base of all toolkit errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/layer dimension mismatch. Messages name both shapes.
struct ShapeError : Error {
  using Error::Error;
};

// File or format problem (dataset, checkpoint, manifest). CLI exit code 2.
struct DataError : Error {
  using Error::Error;
};

// NaN/Inf or other numeric breakdown. CLI exit code 3.
struct NumericError : Error {
  using Error::Error;
};

// Bad flags / bad config keys. CLI exit code 1.
struct UsageError : Error {
  using Error::Error;
};

// Checkpoint decode failure with a machine-checkable cause.
struct CheckpointError : DataError {
  enum class Kind { bad_magic, bad_version, truncated };
  Kind kind;
  CheckpointError(Kind k, const std::string& msg) : DataError(msg), kind(k) {}
};

}  // namespace netscope
