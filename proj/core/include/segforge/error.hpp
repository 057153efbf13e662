#pragma once

#include <stdexcept>
#include <string>

namespace segforge {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke an operation's precondition (shape mismatch, wrong rank...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value (non-positive stride, bad filter list...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input data could not be read or is malformed.
class DataError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf encountered, or training diverged.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// The finite-difference oracle itself could not produce a trustworthy answer.
class OracleError : public Error {
 public:
  using Error::Error;
};

enum class CheckpointErrorKind {
  kIo,
  kBadMagic,
  kVersionMismatch,
  kTruncatedRecord,
  kUnknownParameter,
  kMalformed,
};

class CheckpointError : public Error {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& what)
      : Error(what), kind_(kind) {}

  CheckpointErrorKind kind() const noexcept { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

}  // namespace segforge
