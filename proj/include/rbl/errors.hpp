#pragma once

#include <stdexcept>
#include <string>

namespace rbl {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: bad sizes, incompatible grid/partition pairs, bad config.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A parameter left the admissible set (some entry <= 0 or below the floor).
class DomainViolation : public Error {
 public:
  using Error::Error;
};

/// Iterative solver did not reach the requested tolerance.
class SolverFailure : public Error {
 public:
  SolverFailure(const std::string& what, double achieved_residual)
      : Error(what), achieved_residual_(achieved_residual) {}
  double achieved_residual() const noexcept { return achieved_residual_; }

 private:
  double achieved_residual_;
};

/// A reduced solve was requested before any basis vector was added.
class EmptyBasis : public Error {
 public:
  using Error::Error;
};

class InvalidPhantom : public Error {
 public:
  using Error::Error;
};

}  // namespace rbl
