#pragma once

#include <Eigen/Dense>

#include "htosim/errors.hpp"
#include "htosim/numerics.hpp"

namespace htosim::plant {

constexpr double kBar = 1e5;  // Pa per bar

enum class Species { H2, O2 };

struct SpeciesParams {
  Species id = Species::H2;
  double z = 2.0;       // electrons transferred per molecule
  double D = 0.0;       // membrane diffusion coefficient, m^2/s
  double S = 0.0;       // solubility constant, mol/(kg bar)
};

/// Geometry, transport and physical constants of the gas train. Defaults
/// describe a 598 m^2 alkaline stack feeding a 1 m pipe in 5 segments and a
/// 2 m^3 gas-liquid separator at 80 degC.
struct PlantParams {
  double A_c = 598.0;       // electrode / diffusion area, m^2
  double d_m = 5e-3;        // membrane thickness, m
  double T = 353.15;        // K
  int n = 5;                // pipe segment count
  double l_p = 1.0;         // total pipe length, m
  double r = 0.01;          // pipe radius, m
  double eta = 1.1e-5;      // gas dynamic viscosity, Pa s
  double V_t = 2.0;         // separator total volume, m^3
  double A = 2.0;           // separator horizontal area, m^2
  double rho = 1290.0;      // lye density, kg/m^3 (30 wt% KOH near 80 degC)
  double F = 96485.0;       // C/mol
  double R_gas = 8.314;     // J/(mol K)
  SpeciesParams h2{Species::H2, 2.0, 5.59e-9, 8.84e-5};
  SpeciesParams o2{Species::O2, 4.0, 0.0, 8.13e-5};

  void validate() const;
  double pipe_segment_volume() const;  // gas volume per segment, m^3
};

/// Distributed truth state: compartments 0..n-1 are pipe segments,
/// compartment n is the separator. Pressures are stored in Pa.
struct PlantState {
  Eigen::VectorXd p;       // Pa, size n+1
  Eigen::VectorXd x_h2;    // mole fraction per compartment
  Eigen::VectorXd x_o2;
  double l = 0.0;          // separator liquid level, m

  void validate(const PlantParams& pp) const;
};

struct PlantInputs {
  double I = 0.0;           // current density, A/m^2
  double dp = 0.0;          // anode-cathode pressure difference, bar
  double m_lye = 0.0;       // separator liquid outflow, kg/s
  double n_out_gas = 0.0;   // separator gas outflow, mol/s
  double m_in = 0.0;        // liquid inflow to the separator, kg/s
};

/// I A_c / (z F)
double production_rate(double I, const SpeciesParams& sp,
                       const PlantParams& pp);

/// rho p S D A_c / d_m; the lye density factor makes the dissolved
/// concentration volumetric so Fick's law comes out in mol/s.
double diffusion_rate(double p_bar, const SpeciesParams& sp,
                      const PlantParams& pp);

/// n_diff * dp / 0.01 bar. Negative dp gives a negative contribution
/// (clamped at total crossover >= 0 inside plant_rhs).
double convection_rate(double n_diff, double dp_bar);

/// Molar flow between adjacent compartments for single-phase gas.
/// Pressures in bar at the interface; positive from i to i+1.
double hagen_poiseuille_flow(double p_i_bar, double p_next_bar,
                             const PlantParams& pp);

/// m_lye S_O2 p_sep
double dissolved_o2_sink(double m_lye, double p_sep_bar,
                         const PlantParams& pp);

struct GasVolume {
  double V;      // m^3
  double dV_dl;  // m^2
};
GasVolume gas_volume(double l, const PlantParams& pp);

struct Effluent {
  double n_o2;  // mol/s
  double n_h2;  // mol/s
};

/// Anodic gas feed into compartment 1: O2 from production, H2 from
/// diffusion + convection at compartment-1 pressure, floored at zero.
Effluent stack_effluent(const PlantInputs& u, double p1_bar,
                        const PlantParams& pp);

/// x_h2 / x_o2; throws SingularError for x_o2 <= 1e-12.
double hto(double x_h2, double x_o2);

/// Time derivative of the full distributed state.
PlantState plant_rhs(const PlantState& s, const PlantInputs& u,
                     const PlantParams& pp);

// Flat-vector packing used with the generic integrator.
// Layout: [p_0..p_n (Pa), x_h2_0..x_h2_n, x_o2_0..x_o2_n, l].
Eigen::VectorXd pack(const PlantState& s);
PlantState unpack(const Eigen::VectorXd& y, const PlantParams& pp);
num::RhsFn make_rhs(const PlantInputs& u, const PlantParams& pp);

struct SteadyStateOptions {
  double tol = 1e-9;        // normalized residual (see steady_state)
  int max_iter = 60;
  bool allow_integration_fallback = true;
};

/// Root of plant_rhs at fixed inputs. Requires |m_in - m_lye| ~ 0 (the level
/// is neutrally stable and is held at the guess value). The residual is
/// normalized as molar imbalance relative to the through-flow for the
/// pressure channels and as raw 1/s rates for the composition channels.
PlantState steady_state(const PlantInputs& u, const PlantParams& pp,
                        const PlantState& guess,
                        const SteadyStateOptions& opt = {});

/// Normalized steady-state residual of s under inputs u (the quantity
/// steady_state drives below its tolerance).
double steady_residual(const PlantState& s, const PlantInputs& u,
                       const PlantParams& pp);

/// Analytic first guess: uniform pressure, feed composition in the pipe and
/// separator, level at half the vessel.
PlantState nominal_guess(const PlantInputs& u, double p_bar,
                         const PlantParams& pp);

/// Inputs that put the separator at p_bar exactly at steady state: gas
/// outflow balances stack effluent minus the dissolved-O2 sink, and
/// m_in = m_lye = m_flow.
PlantInputs nominal_inputs(double I, double p_bar, double dp_bar,
                           double m_flow, const PlantParams& pp);

}  // namespace htosim::plant
