#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace demi {

/// Invalid user-supplied configuration or arguments.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Tensor or matrix dimensions that do not line up.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A domain invariant was violated (non-SPD covariance, s <= 0, ...).
class InvariantError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A NaN or infinity appeared in a computation. `step` is the training step
/// when known, otherwise -1.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what, long step = -1)
      : std::runtime_error(what), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

/// A contrastive value function was handed a batch whose negatives come from
/// the wrong distribution.
class SourceMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace demi
