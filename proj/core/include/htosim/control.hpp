#pragma once

#include <string>
#include <vector>

#include "htosim/errors.hpp"

namespace htosim::ctl {

/// Ideal (non-interacting) PI with output clamping and conditional
/// integration: the integral is frozen whenever integrating would push the
/// output further into saturation.
struct PiController {
  double Kc = 1.0;        // may be negative for direct-acting processes
  double tau_I = 1.0;     // s
  double setpoint = 0.0;
  double bias = 0.0;      // output at zero error and empty integral
  double integral = 0.0;  // accumulated error, s * input-units
  double out_min = -1e300;
  double out_max = 1e300;
  double direction = 1.0;  // +1 or -1

  double step(double measurement, double dt);
};

struct PiGains {
  double Kc;
  double tau_I;
};

/// First-order-plus-time-delay process model. Integrating processes are
/// represented in the k' = k/tau limit with a large tau.
struct FoptdModel {
  double k = 0.0;      // process gain
  double tau = 1.0;    // s
  double theta = 0.0;  // s
};

/// SIMC rules: Kc = tau / (k (tau_c + theta)), tau_I = min(tau, 4(tau_c+theta)).
PiGains simc_tune(const FoptdModel& m, double tau_c);

/// Fits a FOPTD model to an open-loop step response sampled at dt.
/// theta: first crossing of 5% of the total change; tau: time from theta to
/// 63.2% of the total change.
FoptdModel identify_foptd(const std::vector<double>& response, double dt,
                          double step_size);

/// Fits slope and delay of an integrating (ramp) step response; returns the
/// equivalent FOPTD in the integrating limit (tau = tau_big, k = slope*tau_big).
FoptdModel identify_integrating(const std::vector<double>& response, double dt,
                                double step_size, double tau_big = 1e6);

enum class FeedbackSource { Measurement, Estimate };

struct CascadeConfig {
  double hto_sp = 0.0125;
  double p_sp_min = 5.0;   // bar
  double p_sp_max = 20.0;  // bar
  FeedbackSource feedback_source = FeedbackSource::Estimate;
  PiController pc;  // pressure (slave), manipulates gas outflow
  PiController cc;  // concentration (master), emits the pressure setpoint
  PiController lc;  // level, manipulates liquid outflow

  void validate() const;
};

struct Actuation {
  double n_out_gas;  // mol/s
  double m_lye;      // kg/s
  double p_sp;       // bar, after the limiter
};

/// One synchronous tick of the cascade: CC consumes the purity feedback and
/// emits the limited pressure setpoint, PC tracks it, LC holds the level.
Actuation cascade_step(CascadeConfig& cfg, double hto_feedback, double p_meas,
                       double l_meas, double dt);

}  // namespace htosim::ctl
