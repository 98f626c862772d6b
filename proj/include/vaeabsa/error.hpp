#pragma once

#include <stdexcept>
#include <string>

namespace vaeabsa {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad user input: config values, out-of-range ratings, unknown labels,
/// missing files. The CLI maps these to exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class RangeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DomainError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// A file does not follow the expected layout (bad magic, bad JSON, ...).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A binary file is structurally valid at the start but ends too early.
class CorruptionError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Inputs are individually valid but inconsistent with each other.
class DataError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace vaeabsa
