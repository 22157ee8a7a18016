#pragma once

#include <stdexcept>
#include <string>

namespace conns {

/// Bad call-site input: dimension mismatch, empty batch, out-of-range index.
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Invalid or inconsistent configuration (unknown system name, bad field).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed or truncated on-disk artifact. Carries the byte offset at which
/// parsing failed.
struct FormatError : std::runtime_error {
  std::size_t offset = 0;
  FormatError(const std::string& what, std::size_t at)
      : std::runtime_error(what + " (byte offset " + std::to_string(at) + ")"),
        offset(at) {}
};

/// Numerical breakdown inside a decomposition or linear solve.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Newton/stepping failure that the caller cannot recover from.
struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite loss or other unrecoverable training failure.
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace conns
