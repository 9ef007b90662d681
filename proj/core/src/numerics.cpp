#include "htosim/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace htosim::num {

namespace {

constexpr double kMinScale = 1e-300;

double error_norm(const Vector& err, const Vector& y0, const Vector& y1,
                  double rel_tol, double abs_tol) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < err.size(); ++i) {
    const double sc =
        abs_tol + rel_tol * std::max(std::abs(y0[i]), std::abs(y1[i]));
    const double e = err[i] / std::max(sc, kMinScale);
    acc += e * e;
  }
  return std::sqrt(acc / static_cast<double>(err.size()));
}

// Cash-Karp 4(5) embedded pair.
struct CashKarpResult {
  Vector y5;
  Vector err;
};

CashKarpResult cash_karp_step(const RhsFn& f, double t, const Vector& y,
                              double h) {
  static const double a2 = 0.2, a3 = 0.3, a4 = 0.6, a5 = 1.0, a6 = 0.875;
  static const double b21 = 0.2;
  static const double b31 = 3.0 / 40.0, b32 = 9.0 / 40.0;
  static const double b41 = 0.3, b42 = -0.9, b43 = 1.2;
  static const double b51 = -11.0 / 54.0, b52 = 2.5, b53 = -70.0 / 27.0,
                      b54 = 35.0 / 27.0;
  static const double b61 = 1631.0 / 55296.0, b62 = 175.0 / 512.0,
                      b63 = 575.0 / 13824.0, b64 = 44275.0 / 110592.0,
                      b65 = 253.0 / 4096.0;
  static const double c1 = 37.0 / 378.0, c3 = 250.0 / 621.0,
                      c4 = 125.0 / 594.0, c6 = 512.0 / 1771.0;
  static const double d1 = c1 - 2825.0 / 27648.0, d3 = c3 - 18575.0 / 48384.0,
                      d4 = c4 - 13525.0 / 55296.0, d5 = -277.0 / 14336.0,
                      d6 = c6 - 0.25;

  const Vector k1 = f(t, y);
  const Vector k2 = f(t + a2 * h, y + h * (b21 * k1));
  const Vector k3 = f(t + a3 * h, y + h * (b31 * k1 + b32 * k2));
  const Vector k4 = f(t + a4 * h, y + h * (b41 * k1 + b42 * k2 + b43 * k3));
  const Vector k5 =
      f(t + a5 * h, y + h * (b51 * k1 + b52 * k2 + b53 * k3 + b54 * k4));
  const Vector k6 = f(t + a6 * h, y + h * (b61 * k1 + b62 * k2 + b63 * k3 +
                                           b64 * k4 + b65 * k5));
  CashKarpResult r;
  r.y5 = y + h * (c1 * k1 + c3 * k3 + c4 * k4 + c6 * k6);
  r.err = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6);
  return r;
}

// Rosenbrock(2,3) pair after Shampine/Reichelt (the ode23s scheme),
// L-stable on the stiff modes. The Jacobian is refreshed every step; the
// systems here are small enough that this is cheap.
struct RosenbrockResult {
  Vector y1;
  Vector err;
};

RosenbrockResult rosenbrock_step(const RhsFn& f, double t, const Vector& y,
                                 double h) {
  static const double d = 1.0 / (2.0 + std::sqrt(2.0));
  static const double e32 = 6.0 + std::sqrt(2.0);

  const Eigen::Index n = y.size();
  const Matrix J = fd_jacobian(f, t, y);
  Matrix W = Matrix::Identity(n, n) - h * d * J;
  Eigen::PartialPivLU<Matrix> lu(W);

  const Vector f0 = f(t, y);
  const Vector k1 = lu.solve(f0);
  const Vector f1 = f(t + 0.5 * h, y + 0.5 * h * k1);
  const Vector k2 = lu.solve(f1 - k1) + k1;

  RosenbrockResult r;
  r.y1 = y + h * k2;
  const Vector f2 = f(t + h, r.y1);
  const Vector k3 = lu.solve(f2 - e32 * (k2 - f1) - 2.0 * (k1 - f0));
  r.err = (h / 6.0) * (k1 - 2.0 * k2 + k3);
  return r;
}

Vector adaptive_advance(const RhsFn& rhs, Vector y, double t0, double t1,
                        const IntegratorConfig& cfg, bool stiff) {
  double t = t0;
  double h = std::min(cfg.max_step, t1 - t0);
  const double hmin = 1e-14 * std::max(1.0, std::abs(t1));
  // Rounding can leave t a few ulps short of t1 after the final step.
  const double t_done = 4.0 * std::numeric_limits<double>::epsilon() *
                        std::max(1.0, std::abs(t1));
  const double order = stiff ? 3.0 : 5.0;

  while (t1 - t > t_done) {
    h = std::min(h, t1 - t);
    if (h < hmin) {
      throw StiffnessError("integrator step size underflow", t);
    }
    Vector y_new, err;
    try {
      if (stiff) {
        auto r = rosenbrock_step(rhs, t, y, h);
        y_new = std::move(r.y1);
        err = std::move(r.err);
      } else {
        auto r = cash_karp_step(rhs, t, y, h);
        y_new = std::move(r.y5);
        err = std::move(r.err);
      }
    } catch (const DomainError&) {
      // Trial state left the model's admissible region; retry smaller.
      h *= 0.25;
      continue;
    }
    const double en = error_norm(err, y, y_new, cfg.rel_tol, cfg.abs_tol);
    if (!std::isfinite(en)) {
      h *= 0.25;
      continue;
    }
    if (en <= 1.0) {
      t += h;
      y = std::move(y_new);
      const double grow =
          (en > 0.0) ? 0.9 * std::pow(en, -1.0 / order) : 5.0;
      h = std::min(cfg.max_step, h * std::clamp(grow, 0.2, 5.0));
    } else {
      h *= std::clamp(0.9 * std::pow(en, -1.0 / order), 0.1, 0.9);
    }
  }
  return y;
}

Vector rk4_advance(const RhsFn& rhs, Vector y, double t0, double t1,
                   double h_nominal) {
  double t = t0;
  while (t < t1) {
    const double h = std::min(h_nominal, t1 - t);
    const Vector k1 = rhs(t, y);
    const Vector k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1);
    const Vector k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2);
    const Vector k4 = rhs(t + h, y + h * k3);
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    t += h;
  }
  return y;
}

}  // namespace

Vector integrate_interval(const RhsFn& rhs, const Vector& y0, double t0,
                          double t1, const IntegratorConfig& cfg) {
  if (!(t1 > t0)) {
    throw DomainError("integrate: t1 must exceed t0");
  }
  switch (cfg.method) {
    case Method::AdaptiveRk:
      return adaptive_advance(rhs, y0, t0, t1, cfg, /*stiff=*/false);
    case Method::Rosenbrock:
      return adaptive_advance(rhs, y0, t0, t1, cfg, /*stiff=*/true);
    case Method::FixedStep:
      return rk4_advance(rhs, y0, t0, t1, cfg.max_step);
  }
  throw DomainError("integrate: unknown method");
}

Trajectory integrate(const RhsFn& rhs, const Vector& y0, double t0, double t1,
                     double grid_dt, const IntegratorConfig& cfg) {
  if (grid_dt <= 0.0) {
    throw DomainError("integrate: grid_dt must be positive");
  }
  const double span = t1 - t0;
  const long steps = std::lround(span / grid_dt);
  if (steps < 1 || std::abs(steps * grid_dt - span) > 1e-9 * std::max(1.0, span)) {
    throw DomainError("integrate: span is not a multiple of grid_dt");
  }
  Trajectory tr;
  tr.t.reserve(steps + 1);
  tr.y.reserve(steps + 1);
  tr.t.push_back(t0);
  tr.y.push_back(y0);
  Vector y = y0;
  for (long k = 1; k <= steps; ++k) {
    const double ta = t0 + (k - 1) * grid_dt;
    const double tb = t0 + k * grid_dt;
    y = integrate_interval(rhs, y, ta, tb, cfg);
    tr.t.push_back(tb);
    tr.y.push_back(y);
  }
  return tr;
}

Matrix solve_linear(const Matrix& A, const Matrix& B) {
  if (A.rows() != A.cols()) {
    throw DomainError("solve_linear: A must be square");
  }
  if (A.rows() != B.rows()) {
    throw DomainError("solve_linear: dimension mismatch");
  }
  Eigen::JacobiSVD<Matrix> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double smax = sv(0);
  const double smin = sv(sv.size() - 1);
  if (smin <= 0.0 || smax / smin > 1e12) {
    throw SingularError("solve_linear: matrix singular or condition > 1e12");
  }
  return svd.solve(B);
}

int rank(const Matrix& A, double tol) {
  if (A.size() == 0) {
    throw DomainError("rank: empty matrix");
  }
  Eigen::JacobiSVD<Matrix> svd(A);
  const auto& sv = svd.singularValues();
  const double thresh = tol * sv(0);
  int r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > thresh) ++r;
  }
  return r;
}

Matrix fd_jacobian(const RhsFn& rhs, double t, const Vector& y) {
  const Eigen::Index n = y.size();
  const Vector f0 = rhs(t, y);
  Matrix J(f0.size(), n);
  const double sqrt_eps = std::sqrt(std::numeric_limits<double>::epsilon());
  for (Eigen::Index j = 0; j < n; ++j) {
    const double dy = sqrt_eps * std::max(std::abs(y[j]), 1e-6);
    Vector yp = y;
    yp[j] += dy;
    J.col(j) = (rhs(t, yp) - f0) / dy;
  }
  return J;
}

}  // namespace htosim::num
