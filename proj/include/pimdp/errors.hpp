#pragma once

#include <stdexcept>
#include <string>

namespace pimdp {

/// Mixing quantities whose dimensions disagree (addition, basis length).
/// Signals a modeling bug at the call site, not a data problem.
struct DimensionError : std::runtime_error {
  explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A variable's dimension lies outside the span of the context columns.
struct NonDimensionalizableError : std::runtime_error {
  NonDimensionalizableError(const std::string& variable,
                            const std::string& base_dim)
      : std::runtime_error("variable '" + variable +
                           "' cannot be non-dimensionalized: base dimension " +
                           base_dim + " is not covered by the context"),
        variable_name(variable),
        offending_base(base_dim) {}
  std::string variable_name;
  std::string offending_base;
};

/// Covariance factorization failed even after the jitter ladder.
struct ConditioningError : std::runtime_error {
  explicit ConditioningError(const std::string& msg)
      : std::runtime_error(msg) {}
};

/// Simulator produced a non-finite state.
struct SimulationError : std::runtime_error {
  explicit SimulationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Bad user input: config files, checkpoints, CLI arguments.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace pimdp
