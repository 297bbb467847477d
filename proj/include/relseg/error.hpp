#pragma once

#include <stdexcept>
#include <string>

namespace relseg {

// Error categories map onto the CLI exit-code contract:
// config/usage/validation/dimension -> 2, io -> 3, numeric -> 4.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct UsageError : Error {
  using Error::Error;
};

struct ValidationError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

struct NumericError : Error {
  using Error::Error;
};

}  // namespace relseg
