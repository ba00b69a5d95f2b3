#pragma once

#include <stdexcept>
#include <string>

namespace jnd {

// Root of every error the toolkit throws on purpose. The CLI maps the
// subclasses onto exit codes; anything else escaping is an internal error.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A configuration value is out of its allowed set.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Caller-supplied data violates a precondition (empty dataset, bad pixel range, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

// A file on disk is malformed.
class FormatError : public Error {
 public:
  using Error::Error;
};

class VersionMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

// A gradient or step went non-finite or exploded.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// An attack was asked to start from an image the model already gets wrong.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// No sweep cell met the success-rate floor.
class NoViableConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace jnd
