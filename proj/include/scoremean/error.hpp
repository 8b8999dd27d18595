#pragma once

#include <stdexcept>
#include <string>

namespace scoremean {

// Two broad classes matter to callers: input/domain problems (exit code 1 in
// the CLI) and numerical breakdowns (exit code 2).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public DomainError {
 public:
  using DomainError::DomainError;
};

class UnsupportedOperation : public DomainError {
 public:
  using DomainError::DomainError;
};

class CutLocusError : public DomainError {
 public:
  using DomainError::DomainError;
};

class NoOracleError : public UnsupportedOperation {
 public:
  using UnsupportedOperation::UnsupportedOperation;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class DegenerateMetricError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class IntegrationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace scoremean
