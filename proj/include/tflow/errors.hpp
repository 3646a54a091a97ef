#pragma once
#include <stdexcept>
#include <string>

namespace tflow {

// Base for everything thrown by the library. The CLI maps subclasses to exit
// codes, so keep the taxonomy small and meaningful.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Two grid functions with incompatible axes were combined.
struct GridMismatch : Error {
  using Error::Error;
};

// A contraction or kernel was requested at a time where only the regularized
// limit exists and the caller did not ask for it.
struct SingularTime : Error {
  using Error::Error;
};

// Linear solve hit a numerically singular matrix (Dyson step operator).
struct SingularSolve : Error {
  using Error::Error;
};

// Step size underflowed before reaching the target temperature.
struct FlowStalled : Error {
  using Error::Error;
};

// Binary kernel file is malformed or version-incompatible.
struct FormatError : Error {
  using Error::Error;
};

// Config text failed to parse; carries 1-based position.
struct ParseError : Error {
  int line = 0;
  int col = 0;
  ParseError(const std::string& msg, int line_, int col_)
      : Error(msg + " (line " + std::to_string(line_) + ", col " + std::to_string(col_) + ")"),
        line(line_), col(col_) {}
};

// A validation check (cmd_validate) failed.
struct ValidationError : Error {
  using Error::Error;
};

}  // namespace tflow
