#pragma once

#include <stdexcept>
#include <string>

namespace gksa {

// Shape mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Invalid configuration value (bad sigma, odd dimension, unknown key...).
// The CLI maps this to exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Operation called in the wrong order, e.g. backward before forward.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A function evaluated to NaN/Inf where a finite value is required.
class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Work would exceed a fixed enumeration budget.
class SizeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Label sequence cannot be aligned to the lattice (needs more frames).
class InfeasibleAlignmentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Feature sequence shorter than one subsampling stack.
class InputTooShortError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gksa
