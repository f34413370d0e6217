#pragma once

#include <stdexcept>
#include <string>

namespace dvae {

// Base for every error raised by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Ambient point lies on (or numerically next to) the singular set of the closest-point map.
// The walk sampler treats this as a signal to redraw noise.
class SingularProjection : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class UnsupportedManifold : public Error {
 public:
  using Error::Error;
};

class ResampleExceeded : public Error {
 public:
  using Error::Error;
};

class NonFinite : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class FormatError : public IoError {
 public:
  using IoError::IoError;
};

class BadMagic : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedFile : public FormatError {
 public:
  using FormatError::FormatError;
};

class CountMismatch : public FormatError {
 public:
  using FormatError::FormatError;
};

class BadGrid : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace dvae
