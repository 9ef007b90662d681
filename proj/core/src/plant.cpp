#include "htosim/plant.hpp"

#include <cmath>
#include <string>

namespace htosim::plant {

namespace {

// Looser than the trajectory invariant: off-manifold evaluations from
// finite-difference Jacobians perturb x_h2 and x_o2 independently.
constexpr double kSumTol = 1e-6;

}  // namespace

void PlantParams::validate() const {
  auto pos = [](double v, const char* name) {
    if (!(v > 0.0)) {
      throw DomainError(std::string("PlantParams: ") + name +
                        " must be strictly positive");
    }
  };
  pos(A_c, "A_c");
  pos(d_m, "d_m");
  pos(T, "T");
  pos(l_p, "l_p");
  pos(r, "r");
  pos(eta, "eta");
  pos(V_t, "V_t");
  pos(A, "A");
  pos(rho, "rho");
  pos(F, "F");
  pos(R_gas, "R_gas");
  if (n < 1) {
    throw DomainError("PlantParams: n must be >= 1");
  }
  if (h2.z != 2.0 && h2.z != 4.0) {
    throw DomainError("PlantParams: h2.z must be 2 or 4");
  }
  if (o2.z != 2.0 && o2.z != 4.0) {
    throw DomainError("PlantParams: o2.z must be 2 or 4");
  }
  if (h2.D < 0.0 || o2.D < 0.0 || h2.S <= 0.0 || o2.S <= 0.0) {
    throw DomainError("PlantParams: species D >= 0 and S > 0 required");
  }
}

double PlantParams::pipe_segment_volume() const {
  return M_PI * r * r * l_p / static_cast<double>(n);
}

void PlantState::validate(const PlantParams& pp) const {
  const int m = pp.n + 1;
  if (p.size() != m || x_h2.size() != m || x_o2.size() != m) {
    throw DomainError("PlantState: wrong compartment count");
  }
  for (int i = 0; i < m; ++i) {
    if (!(p[i] > 0.0)) {
      throw DomainError("PlantState: nonpositive pressure in compartment " +
                        std::to_string(i + 1));
    }
    if (x_h2[i] < -kSumTol || x_h2[i] > 1.0 + kSumTol) {
      throw DomainError("PlantState: x_h2 out of [0,1] in compartment " +
                        std::to_string(i + 1));
    }
    if (std::abs(x_h2[i] + x_o2[i] - 1.0) > kSumTol) {
      throw DomainError(
          "PlantState: mole fractions do not sum to 1 in compartment " +
          std::to_string(i + 1));
    }
  }
  const double lv = l * pp.A;
  if (!(lv > 0.0) || !(lv < pp.V_t)) {
    throw DomainError("PlantState: separator level outside the vessel");
  }
}

double production_rate(double I, const SpeciesParams& sp,
                       const PlantParams& pp) {
  if (I < 0.0) {
    throw DomainError("production_rate: negative current density");
  }
  return I * pp.A_c / (sp.z * pp.F);
}

double diffusion_rate(double p_bar, const SpeciesParams& sp,
                      const PlantParams& pp) {
  if (p_bar < 0.0) {
    throw DomainError("diffusion_rate: negative pressure");
  }
  return pp.rho * p_bar * sp.S * sp.D * pp.A_c / pp.d_m;
}

double convection_rate(double n_diff, double dp_bar) {
  if (n_diff < 0.0) {
    throw DomainError("convection_rate: negative diffusion rate");
  }
  return n_diff * dp_bar / 0.01;
}

double hagen_poiseuille_flow(double p_i_bar, double p_next_bar,
                             const PlantParams& pp) {
  if (!(p_i_bar > 0.0) || !(p_next_bar > 0.0)) {
    throw DomainError("hagen_poiseuille_flow: nonpositive pressure");
  }
  const double c = static_cast<double>(pp.n) * M_PI * std::pow(pp.r, 4) /
                   (16.0 * pp.eta * pp.R_gas * pp.T * pp.l_p);
  const double pi = p_i_bar * kBar;
  const double pn = p_next_bar * kBar;
  // (pi - pn)(pi + pn) rather than pi^2 - pn^2: the steady pressure drop is
  // many orders of magnitude below the absolute pressure.
  return c * (pi - pn) * (pi + pn);
}

double dissolved_o2_sink(double m_lye, double p_sep_bar,
                         const PlantParams& pp) {
  if (m_lye < 0.0 || p_sep_bar < 0.0) {
    throw DomainError("dissolved_o2_sink: negative argument");
  }
  return m_lye * pp.o2.S * p_sep_bar;
}

GasVolume gas_volume(double l, const PlantParams& pp) {
  const double lv = l * pp.A;
  if (!(lv > 0.0) || !(lv < pp.V_t)) {
    throw DomainError("gas_volume: level outside the physical range");
  }
  return {pp.V_t - lv, -pp.A};
}

Effluent stack_effluent(const PlantInputs& u, double p1_bar,
                        const PlantParams& pp) {
  const double n_o2 = production_rate(u.I, pp.o2, pp);
  const double n_diff = diffusion_rate(p1_bar, pp.h2, pp);
  const double n_h2 = std::max(0.0, n_diff + convection_rate(n_diff, u.dp));
  return {n_o2, n_h2};
}

double hto(double x_h2, double x_o2) {
  if (x_o2 <= 1e-12) {
    throw SingularError("hto: vanishing O2 fraction");
  }
  return x_h2 / x_o2;
}

namespace {

struct Balance {
  Eigen::VectorXd dp;        // Pa/s
  Eigen::VectorXd dx_h2;     // 1/s
  double dl;                 // m/s
  Eigen::VectorXd imbalance; // net molar inflow per compartment, mol/s
  double n_ref;              // through-flow scale, mol/s
};

Balance assemble(const PlantState& s, const PlantInputs& u,
                 const PlantParams& pp) {
  const int m = pp.n + 1;
  const double RT = pp.R_gas * pp.T;

  const Effluent eff = stack_effluent(u, s.p[0] / kBar, pp);

  // Inter-compartment flows; flow[i] leaves compartment i toward i+1.
  Eigen::VectorXd flow(pp.n);
  for (int i = 0; i < pp.n; ++i) {
    flow[i] = hagen_poiseuille_flow(s.p[i] / kBar, s.p[i + 1] / kBar, pp);
  }

  // Species inflow per compartment; donor composition for reversed flow.
  Eigen::VectorXd in_h2(m), in_o2(m);
  in_h2[0] = eff.n_h2;
  in_o2[0] = eff.n_o2;
  for (int i = 0; i < pp.n; ++i) {
    const int donor = flow[i] >= 0.0 ? i : i + 1;
    in_h2[i + 1] = flow[i] * s.x_h2[donor];
    in_o2[i + 1] = flow[i] * s.x_o2[donor];
  }
  const double n_d = dissolved_o2_sink(u.m_lye, s.p[m - 1] / kBar, pp);
  in_o2[m - 1] -= n_d;

  const double dl = (u.m_in - u.m_lye) / (pp.rho * pp.A);
  const GasVolume sep = gas_volume(s.l, pp);
  const double dV_sep = sep.dV_dl * dl;

  Balance b;
  b.dp.resize(m);
  b.dx_h2.resize(m);
  b.imbalance.resize(m);
  b.dl = dl;
  b.n_ref = std::max(1e-6, eff.n_h2 + eff.n_o2 + u.n_out_gas + n_d);

  const double v_pipe = pp.pipe_segment_volume();
  for (int i = 0; i < m; ++i) {
    const bool is_sep = (i == m - 1);
    const double V = is_sep ? sep.V : v_pipe;
    const double Vdot = is_sep ? dV_sep : 0.0;
    const double out = is_sep ? u.n_out_gas : flow[i];
    const double in = in_h2[i] + in_o2[i];
    b.imbalance[i] = in - out;
    b.dp[i] = (b.imbalance[i] * RT - s.p[i] * Vdot) / V;
    b.dx_h2[i] = RT * (in_h2[i] * s.x_o2[i] - in_o2[i] * s.x_h2[i]) /
                 (s.p[i] * V);
  }
  return b;
}

}  // namespace

PlantState plant_rhs(const PlantState& s, const PlantInputs& u,
                     const PlantParams& pp) {
  s.validate(pp);
  const Balance b = assemble(s, u, pp);
  PlantState d;
  d.p = b.dp;
  d.x_h2 = b.dx_h2;
  d.x_o2 = -b.dx_h2;  // Eq-level antisymmetry keeps the fractions summing to 1
  d.l = b.dl;
  return d;
}

Eigen::VectorXd pack(const PlantState& s) {
  const int m = static_cast<int>(s.p.size());
  Eigen::VectorXd y(3 * m + 1);
  y.segment(0, m) = s.p;
  y.segment(m, m) = s.x_h2;
  y.segment(2 * m, m) = s.x_o2;
  y[3 * m] = s.l;
  return y;
}

PlantState unpack(const Eigen::VectorXd& y, const PlantParams& pp) {
  const int m = pp.n + 1;
  if (y.size() != 3 * m + 1) {
    throw DomainError("unpack: wrong state dimension");
  }
  PlantState s;
  s.p = y.segment(0, m);
  s.x_h2 = y.segment(m, m);
  s.x_o2 = y.segment(2 * m, m);
  s.l = y[3 * m];
  return s;
}

num::RhsFn make_rhs(const PlantInputs& u, const PlantParams& pp) {
  return [u, pp](double /*t*/, const Eigen::VectorXd& y) {
    const PlantState s = unpack(y, pp);
    return pack(plant_rhs(s, u, pp));
  };
}

double steady_residual(const PlantState& s, const PlantInputs& u,
                       const PlantParams& pp) {
  const Balance b = assemble(s, u, pp);
  double worst = std::abs(b.dl);
  for (int i = 0; i < b.imbalance.size(); ++i) {
    worst = std::max(worst, std::abs(b.imbalance[i]) / b.n_ref);
    worst = std::max(worst, std::abs(b.dx_h2[i]));
  }
  return worst;
}

namespace {

// Reduced unknowns for the root solver: pressures (bar) and H2 fractions.
// The level is neutrally stable and is held fixed; x_o2 = 1 - x_h2.
Eigen::VectorXd reduced_residual(const Eigen::VectorXd& z, double l,
                                 const PlantInputs& u, const PlantParams& pp) {
  const int m = pp.n + 1;
  PlantState s;
  s.p = z.segment(0, m) * kBar;
  s.x_h2 = z.segment(m, m);
  s.x_o2 = Eigen::VectorXd::Ones(m) - s.x_h2;
  s.l = l;
  const Balance b = assemble(s, u, pp);
  Eigen::VectorXd r(2 * m);
  r.segment(0, m) = b.imbalance / b.n_ref;
  r.segment(m, m) = b.dx_h2;
  return r;
}

}  // namespace

PlantState nominal_guess(const PlantInputs& u, double p_bar,
                         const PlantParams& pp) {
  const int m = pp.n + 1;
  const Effluent eff = stack_effluent(u, p_bar, pp);
  const double feed_ratio =
      eff.n_o2 > 0.0 ? eff.n_h2 / eff.n_o2 : 0.0;
  const double n_d = dissolved_o2_sink(u.m_lye, p_bar, pp);
  const double sep_o2 = std::max(1e-9, eff.n_o2 - n_d);
  const double sep_ratio = eff.n_h2 / sep_o2;

  PlantState s;
  s.p = Eigen::VectorXd::Constant(m, p_bar * kBar);
  s.x_h2.resize(m);
  s.x_o2.resize(m);
  for (int i = 0; i < m; ++i) {
    const double ratio = (i == m - 1) ? sep_ratio : feed_ratio;
    s.x_h2[i] = ratio / (1.0 + ratio);
    s.x_o2[i] = 1.0 - s.x_h2[i];
  }
  s.l = 0.5 * pp.V_t / pp.A;
  return s;
}

PlantInputs nominal_inputs(double I, double p_bar, double dp_bar,
                           double m_flow, const PlantParams& pp) {
  PlantInputs u;
  u.I = I;
  u.dp = dp_bar;
  u.m_lye = m_flow;
  u.m_in = m_flow;
  const Effluent eff = stack_effluent(u, p_bar, pp);
  u.n_out_gas =
      eff.n_h2 + eff.n_o2 - dissolved_o2_sink(m_flow, p_bar, pp);
  return u;
}

PlantState steady_state(const PlantInputs& u, const PlantParams& pp,
                        const PlantState& guess,
                        const SteadyStateOptions& opt) {
  pp.validate();
  guess.validate(pp);
  if (std::abs(u.m_in - u.m_lye) > 1e-12 * std::max(1.0, u.m_lye)) {
    throw DomainError(
        "steady_state: level drifts unless m_in equals m_lye");
  }
  const int m = pp.n + 1;
  const double l = guess.l;

  auto make_state = [&](const Eigen::VectorXd& z) {
    PlantState s;
    s.p = z.segment(0, m) * kBar;
    s.x_h2 = z.segment(m, m);
    s.x_o2 = Eigen::VectorXd::Ones(m) - s.x_h2;
    s.l = l;
    return s;
  };

  Eigen::VectorXd z(2 * m);
  z.segment(0, m) = guess.p / kBar;
  z.segment(m, m) = guess.x_h2;

  double best = std::numeric_limits<double>::infinity();
  for (int attempt = 0; attempt < 2; ++attempt) {
    for (int it = 0; it < opt.max_iter; ++it) {
      const Eigen::VectorXd r = reduced_residual(z, l, u, pp);
      const double rn = r.lpNorm<Eigen::Infinity>();
      best = std::min(best, rn);
      if (rn < opt.tol) {
        PlantState s = make_state(z);
        s.validate(pp);
        return s;
      }
      // Forward-difference Jacobian in the reduced variables.
      Eigen::MatrixXd J(2 * m, 2 * m);
      for (int j = 0; j < 2 * m; ++j) {
        const double scale = (j < m) ? std::abs(z[j]) : 1.0;
        const double dz = 1e-7 * std::max(scale, 1e-3);
        Eigen::VectorXd zp = z;
        zp[j] += dz;
        J.col(j) = (reduced_residual(zp, l, u, pp) - r) / dz;
      }
      Eigen::VectorXd step = J.partialPivLu().solve(-r);
      // Damped update: backtrack until the residual improves.
      double lambda = 1.0;
      bool accepted = false;
      for (int bt = 0; bt < 30; ++bt) {
        Eigen::VectorXd zt = z + lambda * step;
        bool admissible = true;
        for (int i = 0; i < m; ++i) {
          if (!(zt[i] > 0.0) || zt[m + i] < 0.0 || zt[m + i] > 1.0) {
            admissible = false;
            break;
          }
        }
        if (admissible) {
          const double rt =
              reduced_residual(zt, l, u, pp).lpNorm<Eigen::Infinity>();
          if (rt < rn || rt < opt.tol) {
            z = zt;
            accepted = true;
            break;
          }
        }
        lambda *= 0.5;
      }
      if (!accepted) {
        break;  // stagnated; fall through to the integration fallback
      }
    }
    if (attempt == 0 && opt.allow_integration_fallback) {
      // Long-horizon integration toward the attractor, then polish.
      num::IntegratorConfig icfg;
      icfg.method = num::Method::Rosenbrock;
      icfg.max_step = 50.0;
      PlantState s = make_state(z);
      const Eigen::VectorXd yend = num::integrate_interval(
          make_rhs(u, pp), pack(s), 0.0, 2e4, icfg);
      const PlantState relaxed = unpack(yend, pp);
      z.segment(0, m) = relaxed.p / kBar;
      z.segment(m, m) = relaxed.x_h2;
    } else {
      break;
    }
  }
  throw ConvergenceError("steady_state: no convergence within budget", best);
}

}  // namespace htosim::plant
