#pragma once

#include <stdexcept>
#include <string>

namespace htosim {

/// Physically inadmissible argument or state (negative current, level out of
/// the vessel, composition not summing to one, ...).
class DomainError : public std::runtime_error {
 public:
  explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

/// Singular or numerically unusable linear system / composition.
class SingularError : public std::runtime_error {
 public:
  explicit SingularError(const std::string& what) : std::runtime_error(what) {}
};

/// Adaptive integrator could not make progress.
class StiffnessError : public std::runtime_error {
 public:
  StiffnessError(const std::string& what, double t)
      : std::runtime_error(what + " at t=" + std::to_string(t)), time(t) {}
  double time;
};

/// Root solver ran out of budget.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : std::runtime_error(what + " (best residual " +
                           std::to_string(residual) + ")"),
        best_residual(residual) {}
  double best_residual;
};

/// Step-test identification failed (non-settling response, zero step, ...).
class IdentificationError : public std::runtime_error {
 public:
  explicit IdentificationError(const std::string& what)
      : std::runtime_error(what) {}
};

/// Disturbance calibration could not reach the target purity level.
class CalibrationError : public std::runtime_error {
 public:
  explicit CalibrationError(const std::string& what)
      : std::runtime_error(what) {}
};

/// Malformed or invalid configuration input.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace htosim
