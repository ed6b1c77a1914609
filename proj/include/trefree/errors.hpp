#pragma once

#include <stdexcept>
#include <string>

namespace trefree {

// Bad shapes, out-of-range hyperparameters, malformed inputs.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Mathematical domain violations (non-positive std, KL support mismatch).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A ratio pi_new/pi_old with pi_old(a|s) == 0 at a point that matters.
class DivisionByZero : public DomainError {
 public:
  DivisionByZero(int state, int action)
      : DomainError("zero old-policy probability at (s=" + std::to_string(state) +
                    ", a=" + std::to_string(action) + ")"),
        state_(state),
        action_(action) {}

  int state() const { return state_; }
  int action() const { return action_; }

 private:
  int state_;
  int action_;
};

// Non-finite intermediates, ratio overflow, diverging iterates.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace trefree
