#pragma once

#include <stdexcept>
#include <string>

namespace cycleground {

/// Base class for every error raised by the library. The CLI maps the
/// concrete subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an operation's contract (bad argument, bad flag, bad mode).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// A value failed domain validation (degenerate box, bad config field).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf where a finite number is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. The message carries line/record context.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A file was written by an unknown schema/format version.
class VersionError : public Error {
 public:
  using Error::Error;
};

/// Synthetic data generation could not satisfy its constraints.
class GenerationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace cycleground
