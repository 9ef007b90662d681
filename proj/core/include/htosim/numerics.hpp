#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "htosim/errors.hpp"

namespace htosim::num {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// d/dt y = f(t, y)
using RhsFn = std::function<Vector(double, const Vector&)>;

enum class Method {
  AdaptiveRk,   // explicit Cash-Karp 4(5) embedded pair
  Rosenbrock,   // linearly implicit Rosenbrock(2,3), for stiff systems
  FixedStep,    // classic RK4 at max_step
};

struct IntegratorConfig {
  double max_step = 0.1;    // s
  double rel_tol = 1e-6;
  double abs_tol = 1e-9;
  Method method = Method::Rosenbrock;
};

struct Trajectory {
  std::vector<double> t;
  std::vector<Vector> y;
};

/// Advances y from t0 to t1 with adaptive local error control. Single
/// interval, returns the state at t1.
Vector integrate_interval(const RhsFn& rhs, const Vector& y0, double t0,
                          double t1, const IntegratorConfig& cfg);

/// Integrates over [t0, t1] and samples the solution on the fixed grid
/// t0, t0+grid_dt, ..., t1 (t1 - t0 must be an integer multiple of grid_dt).
Trajectory integrate(const RhsFn& rhs, const Vector& y0, double t0, double t1,
                     double grid_dt, const IntegratorConfig& cfg);

/// Solves A X = B for square nonsingular A. Throws SingularError when the
/// condition estimate exceeds 1e12.
Matrix solve_linear(const Matrix& A, const Matrix& B);

/// Numerical rank by singular value thresholding at tol * sigma_max.
int rank(const Matrix& A, double tol = 1e-10);

/// Forward-difference Jacobian of f at y (used by the stiff stepper and by
/// the root solver; test oracles use their own central differences).
Matrix fd_jacobian(const RhsFn& rhs, double t, const Vector& y);

}  // namespace htosim::num
