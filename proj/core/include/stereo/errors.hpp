#pragma once

#include <stdexcept>
#include <string>

namespace stereo {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor shapes that cannot be combined (dimension mismatch, bad axis).
struct ShapeError : Error {
  using Error::Error;
};

// Invalid data fed to an operation (non-finite coords, empty mask, ...).
struct InputError : Error {
  using Error::Error;
};

// Bad run configuration (unknown keys, out-of-range values).
struct ConfigError : Error {
  using Error::Error;
};

// Computation produced NaN/Inf or diverged.
struct NumericError : Error {
  using Error::Error;
};

// A requested computation exceeds its memory budget.
struct ResourceError : Error {
  using Error::Error;
};

// API misuse (backward on a non-scalar, iteration out of range).
struct UsageError : Error {
  using Error::Error;
};

// Filesystem / serialization failures.
struct IoError : Error {
  using Error::Error;
};

// Scene sampling could not satisfy its constraints within the retry bound.
struct GenerationError : Error {
  using Error::Error;
};

}  // namespace stereo
