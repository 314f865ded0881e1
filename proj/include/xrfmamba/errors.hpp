#pragma once

#include <stdexcept>
#include <string>

namespace xrf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or buffer dimensions disagree with an operation's contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An on-disk artifact (manifest, stream sidecar, predictions, ...) violates
/// its schema. The message names the offending field.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Configuration problems: unknown keys, out-of-range values. The CLI maps
/// these to exit status 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Operation invoked outside its domain (e.g. time-varying parameters given
/// to the convolutional scan).
class ContractError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace xrf
