#pragma once

#include <stdexcept>
#include <string>

namespace shiftmmd {

// Base for all library errors so callers can catch the whole family at once.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Operand shapes do not conform (matmul on 3x4 * 5x2, etc.).
struct ShapeError : Error {
    using Error::Error;
};

// A precondition on argument values was violated.
struct ArgumentError : Error {
    using Error::Error;
};

// NaN or Inf appeared where only finite values are allowed.
struct NumericError : Error {
    using Error::Error;
};

// An object was used in an invalid state (e.g. optimizer step without grads).
struct StateError : Error {
    using Error::Error;
};

// Invalid configuration (files, keys, infeasible constraint constants).
struct ConfigError : Error {
    using Error::Error;
};

// Iterative solver failed to make progress.
struct SolverError : Error {
    using Error::Error;
};

// Input table does not match the declared schema.
struct SchemaError : Error {
    using Error::Error;
};

// Filesystem / parse failures, annotated with the offending path or line.
struct IoError : Error {
    using Error::Error;
};

} // namespace shiftmmd
