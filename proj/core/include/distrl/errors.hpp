#pragma once

#include <stdexcept>
#include <string>

namespace distrl {

// Base class for all library errors so callers can catch one type.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Invalid arguments, malformed distributions, bad configuration values.
class InvalidArgumentError : public Error {
 public:
  explicit InvalidArgumentError(const std::string& what) : Error(what) {}
};

// A statistic vector that no distribution can realise (e.g. decreasing
// expectiles, categorical values outside [0, 1]).
class InfeasibleStatisticsError : public Error {
 public:
  explicit InfeasibleStatisticsError(const std::string& what) : Error(what) {}
};

// An iterative solver stopped without meeting its tolerance. Carries the
// final residual so callers can decide whether the result is usable.
class SolverConvergenceError : public Error {
 public:
  SolverConvergenceError(const std::string& what, double residual, int iterations)
      : Error(what), residual(residual), iterations(iterations) {}
  double residual;
  int iterations;
};

// Fixed-point iteration failed to reach its tolerance within the sweep
// budget, or the support representation exceeded its size guard.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what), residual(residual) {}
  double residual;
};

// Greedy control asked for a mean estimate the statistic set cannot provide
// (e.g. an expectile set without tau = 0.5).
class UnsupportedControlError : public Error {
 public:
  explicit UnsupportedControlError(const std::string& what) : Error(what) {}
};

// Configuration text that does not conform to the schema. Collects every
// violation rather than stopping at the first.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

}  // namespace distrl
