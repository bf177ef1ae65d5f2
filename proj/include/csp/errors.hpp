#pragma once

#include <stdexcept>
#include <string>

namespace csp {

/// Root of every error thrown by this library. The message names the
/// contract that failed.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf reached a public operation, or an input was degenerate.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

// File-format errors. Each failure mode has its own type so callers (and
// tests) can tell a bad header from a short file.
class FormatError : public Error {
 public:
  using Error::Error;
};

class MalformedHeaderError : public FormatError {
 public:
  using FormatError::FormatError;
};

class UnsupportedVersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class DimensionMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedFileError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace csp
