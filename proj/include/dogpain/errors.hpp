#pragma once

#include <stdexcept>
#include <string>

namespace dogpain {

// Base class for all domain errors raised by the library. CLI maps these to
// exit code 1; usage problems are handled by the argument parser (exit 2).
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor/operand shape disagreement.
struct DimensionError : Error {
  using Error::Error;
};

// Invalid configuration value (hyperparameters, kernel sizes, split sizes).
struct ConfigError : Error {
  using Error::Error;
};

// A precondition of an operation was violated by the caller.
struct ContractError : Error {
  using Error::Error;
};

// Malformed input file; message carries the path and line number.
struct ParseError : Error {
  using Error::Error;
};

// File schema or container version does not match what this build reads.
struct VersionError : Error {
  using Error::Error;
};

// Checkpoint container ended before the declared payload.
struct TruncationError : Error {
  using Error::Error;
};

// Checkpoint tensor shapes disagree with the target configuration.
struct ShapeMismatchError : Error {
  using Error::Error;
};

// Spine landmarks coincide; the frame cannot be normalized.
struct DegeneratePoseError : Error {
  using Error::Error;
};

// Filesystem failure (missing file, unwritable path).
struct IoError : Error {
  using Error::Error;
};

}  // namespace dogpain
