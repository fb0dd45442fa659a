#pragma once

#include <stdexcept>
#include <string>

namespace propel {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad configuration: unknown env name, unknown config key, invalid value.
struct ConfigError : Error {
  using Error::Error;
};

// Caller broke a documented precondition (dimension mismatch, NaN input, ...).
struct ContractError : Error {
  using Error::Error;
};

// Operation invalid in the current state (e.g. stepping a finished episode).
struct StateError : Error {
  using Error::Error;
};

// File system problems; message carries the offending path.
struct IoError : Error {
  using Error::Error;
};

// A verification query that cannot produce a sound certificate.
struct VerifyError : Error {
  using Error::Error;
};

// Syntax error with source position, for program text.
struct ParseError : Error {
  ParseError(int line, int col, const std::string& what)
      : Error(std::to_string(line) + ":" + std::to_string(col) + ": " + what),
        line(line),
        col(col) {}
  int line;
  int col;
};

}  // namespace propel
