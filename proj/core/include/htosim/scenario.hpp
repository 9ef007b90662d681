#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "htosim/control.hpp"
#include "htosim/estimator.hpp"
#include "htosim/numerics.hpp"
#include "htosim/plant.hpp"

namespace htosim::sim {

enum class Mode { OpenLoop, ClosedLoop };
enum class Channel { CurrentDensity, PressureDifference };

/// Absolute input level on one channel over [t_start, t_end).
struct DisturbanceEvent {
  double t_start = 0.0;  // s
  double t_end = 0.0;    // s
  Channel channel = Channel::CurrentDensity;
  double value = 0.0;    // A/m^2 or bar

  void validate() const;
};

struct NoiseStd {
  double p_bar = 0.01;
  double l_m = 0.001;
  double x_h2 = 5e-4;
  double x_o2 = 5e-4;
};

struct ScenarioConfig {
  double duration = 9000.0;  // s
  std::vector<DisturbanceEvent> events;
  Mode mode = Mode::ClosedLoop;
  ctl::FeedbackSource feedback_source = ctl::FeedbackSource::Estimate;
  double open_loop_p_sp = 20.0;  // bar
  NoiseStd meas_noise_std;
  std::uint64_t seed = 1;
  double sample_period = 0.1;  // s

  void validate() const;
};

/// Operating point the runs start from and return to between events.
struct NominalConditions {
  double I = 2000.0;      // A/m^2
  double p_bar = 20.0;    // bar
  double dp_bar = 0.05;   // bar
  double m_flow = 10.75;  // kg/s, lye inflow = outflow
};

struct ControlSettings {
  double hto_sp = 0.0125;
  double p_sp_min = 5.0;       // bar
  double p_sp_max = 20.0;      // bar
  double actuator_lag_s = 2.0; // first-order lag of the gas outflow valve
  double n_out_max = 12.0;     // mol/s
  double m_lye_max = 30.0;     // kg/s
  double lc_tau_c = 60.0;      // s
  double outer_ratio = 15.0;   // outer / inner closed-loop time constants
};

struct TuningReport {
  ctl::FoptdModel pc_model, cc_model, lc_model;
  ctl::PiGains pc, cc, lc;
  double inner_cl_tau = 0.0;   // fitted closed inner-loop time constant, s
  double outer_target = 0.0;   // s
  std::string text() const;
};

/// One sampled row of truth, measurement, estimate, actuation and alarms.
struct TimeSeriesRecord {
  double t = 0.0;
  std::vector<double> hto_true;   // per compartment, pipe first
  double hto_meas = 0.0;          // separator HTO from the (noisy) measurement
  double hto_est = 0.0;           // EKF pipe estimate
  std::vector<double> p_bar;      // per compartment
  double l = 0.0;
  double p_sp = 0.0;
  double n_out_gas = 0.0;
  double m_lye = 0.0;
  double I = 0.0;
  double dp = 0.0;
  std::vector<bool> alarm;        // per compartment
  // Raw measurement channels, kept for offline estimator replay.
  double meas_p_bar = 0.0, meas_l = 0.0, meas_x_h2 = 0.0, meas_x_o2 = 0.0;
  // max_i |x_H2,i + x_O2,i - 1| at this sample; not serialized to CSV.
  double comp_sum_err = 0.0;
};

struct RunResult {
  std::vector<TimeSeriesRecord> records;
  std::vector<double> t_oob_per_event_min;
  double peak_hto_pipe = 0.0;
  double peak_hto_sep = 0.0;
  // Estimator-covariance health over the whole run.
  double worst_P_asymmetry = 0.0;
  double min_P_eigenvalue = 0.0;
};

/// Everything a run needs that does not change between the three compared
/// modes: parameters, the nominal steady state, tuned controllers and the
/// estimator model.
struct Setup {
  plant::PlantParams pp;
  NominalConditions nominal;
  ControlSettings control;
  ekf::NoiseConfig noise = ekf::NoiseConfig::defaults();
  num::IntegratorConfig integrator;

  // Derived by make_setup:
  plant::PlantInputs nominal_inputs;
  plant::PlantState steady;
  ekf::SimplifiedModel model;
  ctl::CascadeConfig cascade;
  TuningReport tuning;
};

/// Solves the nominal steady state and commissions the cascade (step-test
/// identification + SIMC per loop, outer loop targeted at outer_ratio times
/// the measured inner closed-loop time constant).
Setup make_setup(const plant::PlantParams& pp, const NominalConditions& nom,
                 const ControlSettings& control,
                 const ekf::NoiseConfig& noise = ekf::NoiseConfig::defaults(),
                 const num::IntegratorConfig& icfg = {});

struct Calibration {
  double I_low = 0.0;    // A/m^2
  double dp_high = 0.0;  // bar
};

/// Bisection on I (down) and dp (up) until the open-loop steady-state
/// separator HTO lands in [target, 1.2 target].
Calibration calibrate_disturbances(const Setup& setup, double target_hto = 0.025);

/// Two square pulses: reduced current density over 30-60 min, elevated
/// pressure difference over 90-120 min, on a 150 min horizon.
std::vector<DisturbanceEvent> standard_disturbance_sequence(const Calibration& c);

RunResult run(const ScenarioConfig& cfg, const Setup& setup);

/// Convenience overload with all-default setup.
RunResult run(const ScenarioConfig& cfg, const plant::PlantParams& pp);

/// Total sampled minutes within (t0, t1] where any compartment's true HTO
/// exceeds the alarm limit.
double t_oob(const std::vector<TimeSeriesRecord>& records, double alarm_limit,
             double t0, double t1);

struct Table1 {
  // Indexed by event (0: current density, 1: pressure difference).
  std::vector<double> open_loop_min;
  std::vector<double> estimate_fb_min;
  std::vector<double> measurement_fb_min;
  std::string text() const;
};

Table1 table1_report(const RunResult& open_loop, const RunResult& estimate_fb,
                     const RunResult& measurement_fb,
                     const std::vector<DisturbanceEvent>& events,
                     double duration_s);

/// Deterministic counter-based Gaussian stream: one independent stream per
/// (seed, channel) pair, indexed by sample number.
double gaussian_noise(std::uint64_t seed, std::uint64_t channel,
                      std::uint64_t k);

}  // namespace htosim::sim
