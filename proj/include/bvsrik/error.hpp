#pragma once

#include <stdexcept>
#include <string>

namespace bvsrik {

/// Bad argument or shape supplied by the caller.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An internal precondition (e.g. normalized scale weights) does not hold.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by the training loop (non-finite loss, missing data).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A flow estimator failed; the message names the frame pair.
class FlowEstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unresolvable or contradictory run configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void require(bool cond, const std::string& message) {
  if (!cond) throw ValidationError(message);
}

}  // namespace bvsrik
