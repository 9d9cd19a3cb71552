#pragma once

#include <stdexcept>
#include <string>

namespace topotrack {

/// Base class for every error raised by the library. Messages carry enough
/// context (file, line, frame, pair) to be printed as-is by the CLI.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input files.
class LoadError : public Error {
 public:
  using Error::Error;
};

/// A precondition on an operation's arguments was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

}  // namespace topotrack
