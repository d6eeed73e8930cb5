#pragma once

#include <stdexcept>
#include <string>

namespace anchorroute {

// All library failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Control family does not fit the motion (joint index out of range, etc.).
class InvalidFamilyError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of an operation (t >= 1 for beta).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Array dimensions disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN or infinity where finite values are required.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

// Linear system has no unique solution.
class SingularSystemError : public Error {
 public:
  using Error::Error;
};

// Codebook construction failed (zero-norm row, infeasible separation).
class InvalidCodebookError : public Error {
 public:
  using Error::Error;
};

// Malformed configuration or serialized document.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace anchorroute
