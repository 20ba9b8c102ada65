#pragma once

#include <stdexcept>
#include <string>

namespace kspdiff {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument or shape preconditions violated by the caller.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A numerical computation produced NaN/Inf or hit a singular case.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Filesystem or stream failure; the message carries the offending path.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace kspdiff
