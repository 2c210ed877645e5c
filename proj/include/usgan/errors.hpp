#pragma once

#include <stdexcept>
#include <string>

namespace usgan {

// Shape/extent mismatch between tensors, images, or masks.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class BoundsError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Image smaller than a requested patch.
class SizeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NotFoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised by the trainer when any loss term stops being finite.
class NonFiniteLossError : public std::runtime_error {
 public:
  NonFiniteLossError(long step, std::string component, double value)
      : std::runtime_error("non-finite loss at step " + std::to_string(step) + " in '" + component +
                           "': " + std::to_string(value)),
        step_(step),
        component_(std::move(component)),
        value_(value) {}

  long step() const noexcept { return step_; }
  const std::string& component() const noexcept { return component_; }
  double value() const noexcept { return value_; }

 private:
  long step_;
  std::string component_;
  double value_;
};

}  // namespace usgan
