#pragma once

#include <stdexcept>
#include <string>

namespace rsc {

// Root of every error the toolkit throws; the CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid problem data: empty control set, non-positive risk parameter, ...
class ModelError : public Error {
 public:
  using Error::Error;
};

// Fixture id not in the builtin registry.
class UnknownFixtureError : public Error {
 public:
  using Error::Error;
};

// Malformed config file or expression.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A coefficient returned NaN/inf; message carries the (s, x, u) witness.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

class SolverError : public Error {
 public:
  using Error::Error;
};

class RankDeficientError : public SolverError {
 public:
  using SolverError::SolverError;
};

class DivergenceError : public SolverError {
 public:
  using SolverError::SolverError;
};

// Exponential-transform regression produced a non-positive conditional expectation.
class NonPositiveTransformError : public SolverError {
 public:
  using SolverError::SolverError;
};

// Explicit HJB step cannot meet the monotonicity bound within the step budget.
class CflError : public SolverError {
 public:
  using SolverError::SolverError;
};

}  // namespace rsc
