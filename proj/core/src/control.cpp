#include "htosim/control.hpp"

#include <algorithm>
#include <cmath>

namespace htosim::ctl {

double PiController::step(double measurement, double dt) {
  if (!(dt > 0.0)) {
    throw DomainError("PiController: dt must be positive");
  }
  if (!(tau_I > 0.0) || !(out_min < out_max)) {
    throw DomainError("PiController: invalid gains or limits");
  }
  const double e = setpoint - measurement;
  const double candidate = integral + e * dt;
  double u = bias + direction * Kc * (e + candidate / tau_I);
  if (u > out_max) {
    u = out_max;
    // conditional integration: only accept the increment if it pulls the
    // output back toward the admissible range
    if (direction * Kc * e < 0.0) integral = candidate;
  } else if (u < out_min) {
    u = out_min;
    if (direction * Kc * e > 0.0) integral = candidate;
  } else {
    integral = candidate;
  }
  return u;
}

PiGains simc_tune(const FoptdModel& m, double tau_c) {
  if (!(tau_c > 0.0)) {
    throw DomainError("simc_tune: tau_c must be positive");
  }
  if (m.k == 0.0) {
    throw IdentificationError("simc_tune: zero process gain");
  }
  PiGains g;
  g.Kc = m.tau / (m.k * (tau_c + m.theta));
  g.tau_I = std::min(m.tau, 4.0 * (tau_c + m.theta));
  return g;
}

FoptdModel identify_foptd(const std::vector<double>& response, double dt,
                          double step_size) {
  if (step_size == 0.0) {
    throw IdentificationError("identify_foptd: zero step size");
  }
  if (response.size() < 8) {
    throw IdentificationError("identify_foptd: response too short");
  }
  const double y0 = response.front();
  const double yf = response.back();
  const double dy = yf - y0;
  if (dy == 0.0) {
    throw IdentificationError("identify_foptd: flat response");
  }
  // Settling check over the last fifth of the record.
  const std::size_t tail = response.size() - response.size() / 5;
  for (std::size_t i = tail; i < response.size(); ++i) {
    if (std::abs(response[i] - yf) > 0.02 * std::abs(dy)) {
      throw IdentificationError("identify_foptd: response did not settle");
    }
  }

  auto crossing = [&](double frac) -> double {
    const double target = y0 + frac * dy;
    for (std::size_t i = 1; i < response.size(); ++i) {
      const double a = response[i - 1];
      const double b = response[i];
      if ((b - target) * (dy > 0 ? 1.0 : -1.0) >= 0.0) {
        const double span = b - a;
        const double frac_in =
            std::abs(span) > 0.0 ? (target - a) / span : 0.0;
        return (static_cast<double>(i - 1) + std::clamp(frac_in, 0.0, 1.0)) *
               dt;
      }
    }
    throw IdentificationError("identify_foptd: threshold never crossed");
  };

  FoptdModel m;
  m.k = dy / step_size;
  m.theta = crossing(0.05);
  const double t63 = crossing(0.632);
  m.tau = std::max(t63 - m.theta, dt);
  return m;
}

FoptdModel identify_integrating(const std::vector<double>& response, double dt,
                                double step_size, double tau_big) {
  if (step_size == 0.0) {
    throw IdentificationError("identify_integrating: zero step size");
  }
  if (response.size() < 8) {
    throw IdentificationError("identify_integrating: response too short");
  }
  // Least-squares line through the late (linear) half of the ramp; the
  // time-axis intercept is the effective delay.
  const std::size_t start = response.size() / 2;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double y0 = response.front();
  std::size_t cnt = 0;
  for (std::size_t i = start; i < response.size(); ++i) {
    const double t = static_cast<double>(i) * dt;
    const double y = response[i] - y0;
    sx += t;
    sy += y;
    sxx += t * t;
    sxy += t * y;
    ++cnt;
  }
  const double denom = cnt * sxx - sx * sx;
  const double slope = (cnt * sxy - sx * sy) / denom;
  const double intercept = (sy - slope * sx) / cnt;
  if (slope == 0.0) {
    throw IdentificationError("identify_integrating: flat response");
  }
  FoptdModel m;
  const double kp = slope / step_size;  // integrating slope, units/(input*s)
  m.theta = std::max(-intercept / slope, dt);
  m.tau = tau_big;
  m.k = kp * tau_big;
  return m;
}

void CascadeConfig::validate() const {
  if (!(hto_sp > 0.0) || !(hto_sp < 0.02)) {
    throw DomainError("CascadeConfig: hto_sp must lie below the 2% alarm limit");
  }
  if (!(p_sp_min < p_sp_max)) {
    throw DomainError("CascadeConfig: pressure setpoint bounds out of order");
  }
}

Actuation cascade_step(CascadeConfig& cfg, double hto_feedback, double p_meas,
                       double l_meas, double dt) {
  if (!std::isfinite(hto_feedback) || !std::isfinite(p_meas) ||
      !std::isfinite(l_meas)) {
    throw DomainError("cascade_step: non-finite measurement");
  }
  cfg.cc.setpoint = cfg.hto_sp;
  cfg.cc.out_min = cfg.p_sp_min;
  cfg.cc.out_max = cfg.p_sp_max;
  Actuation a;
  a.p_sp = cfg.cc.step(hto_feedback, dt);
  cfg.pc.setpoint = a.p_sp;
  a.n_out_gas = cfg.pc.step(p_meas, dt);
  a.m_lye = cfg.lc.step(l_meas, dt);
  return a;
}

}  // namespace htosim::ctl
