#pragma once

#include <stdexcept>
#include <string>

namespace lddu {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Missing or unparsable files.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Data that parses but violates an invariant (dimensions, label values, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Unknown sample id, split name or tracker index.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or degenerate numeric input.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace lddu
