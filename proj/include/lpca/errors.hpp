#pragma once

#include <stdexcept>
#include <string>

namespace lpca {

/// Argument outside the mathematical domain of an operation (bad action, bad gamma).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Invalid or unknown configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A problem instance is too large for an exhaustive routine.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An iterative solver failed to converge or the problem has no feasible point.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Q-learning produced a non-finite or exploding loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller broke a documented precondition or an internal invariant failed.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace lpca
