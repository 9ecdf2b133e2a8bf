#pragma once

#include <stdexcept>
#include <string>

namespace earthgan {

// Base for every error raised by the library. The CLI maps the subclasses
// onto exit codes, so keep new error kinds under one of these.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

// Caller passed arguments that violate a precondition (bad shape, bad index,
// bad config). Maps to exit code 2.
class ValidationError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "validation"; }
};

class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
  const char* kind() const noexcept override { return "shape"; }
};

class IndexError : public ValidationError {
 public:
  using ValidationError::ValidationError;
  const char* kind() const noexcept override { return "index"; }
};

// Malformed bytes on disk: bad magic, truncated payload, checksum mismatch.
class FormatError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "format"; }
};

class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
  const char* kind() const noexcept override { return "truncated"; }
};

class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
  const char* kind() const noexcept override { return "checksum"; }
};

// Checkpoint architecture does not match what the caller expected.
class FingerprintError : public ValidationError {
 public:
  using ValidationError::ValidationError;
  const char* kind() const noexcept override { return "fingerprint"; }
};

// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "io"; }
};

// Training produced NaN/Inf. Carries a diagnostic message.
class DivergenceError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "divergence"; }
};

}  // namespace earthgan
