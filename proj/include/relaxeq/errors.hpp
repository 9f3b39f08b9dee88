#pragma once

#include <stdexcept>
#include <string>

namespace relaxeq {

/// Operand shapes or extents do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A precondition of an operation was violated by the caller.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Invalid user-facing configuration (unknown names, out-of-range values).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// NaN/Inf or divergence encountered during computation.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace relaxeq
