#pragma once

#include <stdexcept>
#include <string>

namespace mappg {

/// Malformed arguments: out-of-range actions, empty batches, bad shapes.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The operation is not defined for this kind of game or policy.
class UnsupportedOperation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A modelling assumption (unique maximizer, positive co-player mass) is broken.
class AssumptionViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegeneratePolicyError : public AssumptionViolation {
 public:
  using AssumptionViolation::AssumptionViolation;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Object is in a state where the call cannot be served (e.g. sampling an empty buffer).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace mappg
