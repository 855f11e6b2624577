#pragma once

#include <stdexcept>
#include <string>

namespace scnet {

/// Base class for every error raised by the library. `exit_code()` is the
/// process status the CLI maps the error to.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

/// Malformed or inconsistent configuration (unknown keys, bad ranges).
class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

/// Bad input data: missing files, unreadable images, wrong dimensions.
class DataError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

/// Tensor shapes that do not fit the operation's contract.
class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

/// Non-finite values, failed factorizations and similar numeric breakdowns.
class NumericError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

}  // namespace scnet
