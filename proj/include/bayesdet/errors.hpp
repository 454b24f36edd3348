#pragma once

#include <stdexcept>
#include <string>

namespace bayesdet {

// Input outside the mathematical domain of an operation (non-positive
// moments, parameter outside a marginal's support, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A caller broke a documented precondition (unnormalized weights, a
// tempering bracket that does not straddle the threshold, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Every particle carries zero likelihood.
class DegeneracyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A reference sampler ran out of its proposal budget.
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ReferenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace bayesdet
