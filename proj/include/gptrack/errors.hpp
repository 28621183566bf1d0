#pragma once

#include <stdexcept>
#include <string>

namespace gptrack {

/// Base class for all library failures.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A caller violated a documented precondition (bad arguments, bad state).
struct ContractViolation : Error {
  using Error::Error;
};

/// A computation broke down numerically (ill-conditioning, singularity).
struct NumericalError : Error {
  using Error::Error;
};

/// Malformed external input (CSV, JSON, config).
struct ParseError : Error {
  using Error::Error;
};

struct FactorizationFailure : NumericalError {
  using NumericalError::NumericalError;
};

struct NegativeVariance : NumericalError {
  using NumericalError::NumericalError;
};

struct AllStartsFailed : NumericalError {
  using NumericalError::NumericalError;
};

struct SolveFailure : NumericalError {
  using NumericalError::NumericalError;
};

struct EulerSingularity : NumericalError {
  using NumericalError::NumericalError;
};

struct PathUnreachable : NumericalError {
  using NumericalError::NumericalError;
};

struct NonMonotoneTimestamp : ContractViolation {
  using ContractViolation::ContractViolation;
};

struct DimensionMismatch : ContractViolation {
  using ContractViolation::ContractViolation;
};

struct EmptyLog : ContractViolation {
  using ContractViolation::ContractViolation;
};

}  // namespace gptrack
