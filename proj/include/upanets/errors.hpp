#pragma once

#include <stdexcept>
#include <string>

namespace upanets {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents do not agree with what an operator requires.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid architecture, schedule or operator configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An object is used in a state that does not support the request.
class StateError : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity appeared where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Caller-supplied value outside its valid domain (labels, counts).
class InputError : public Error {
 public:
  using Error::Error;
};

/// Malformed bytes on disk (dataset records, checkpoints).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A dataset file or directory is missing.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace upanets
