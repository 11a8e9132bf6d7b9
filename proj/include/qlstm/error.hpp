#pragma once

#include <stdexcept>
#include <string>

namespace qlstm {

/// Base of every error raised by the toolchain.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rejected configuration or parameter (bad shape, bad format, bad flag value).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Unusable external data: missing or malformed files, hash mismatches.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Internal consistency check failed; indicates a bug rather than bad input.
class InvariantViolation : public Error {
 public:
  using Error::Error;
};

}  // namespace qlstm
