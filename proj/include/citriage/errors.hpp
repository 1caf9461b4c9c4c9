#pragma once

#include <stdexcept>
#include <string>

namespace citriage {

/// Base class for every data or validation failure raised by the library.
/// Anything else escaping the library is an internal error.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input record (corpus line, registry entry, config file).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Well-formed input that violates a precondition (unknown category,
/// undersupplied class, dimension mismatch, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Model file is truncated or otherwise unreadable.
class CorruptModelError : public Error {
 public:
  using Error::Error;
};

/// Model file was written by an incompatible format version.
class ModelVersionError : public Error {
 public:
  using Error::Error;
};

}  // namespace citriage
