#pragma once

#include <stdexcept>
#include <string>

namespace resemg {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or dimension disagreement between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Caller passed an argument outside the operation's contract.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// A binary file (checkpoint, packed dataset) is malformed.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A raw recording or manifest could not be ingested.
class IngestionError : public Error {
 public:
  using Error::Error;
};

/// The finite-difference oracle evaluated a non-finite value.
class OracleError : public Error {
 public:
  using Error::Error;
};

}  // namespace resemg
