#pragma once

#include <stdexcept>
#include <string>

namespace diffinv {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or precondition violation (CLI exit code 2).
struct ConfigError : Error {
  using Error::Error;
};

/// Dimension / layout mismatch between operands.
struct ShapeError : Error {
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
struct DomainError : Error {
  using Error::Error;
};

/// API misuse, e.g. backward pass without a cached forward pass.
struct StateError : Error {
  using Error::Error;
};

/// File input/output failure (CLI exit code 4).
struct IoError : Error {
  using Error::Error;
};

/// Non-finite values or unbounded growth in an iterative process
/// (CLI exit code 3).
struct NumericError : Error {
  using Error::Error;
};

/// Divergence of a sampling chain, carrying diagnostics.
struct DivergenceError : NumericError {
  DivergenceError(const std::string& what, int chain_, int step_, double max_abs_)
      : NumericError(what), chain(chain_), step(step_), max_abs(max_abs_) {}
  int chain = -1;
  int step = -1;
  double max_abs = 0.0;
};

/// Nonlinear or linear solver failed to converge.
struct SolverError : NumericError {
  using NumericError::NumericError;
};

}  // namespace diffinv
