#include "htosim/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace htosim::sim {

using plant::kBar;

// ---------------------------------------------------------------------------
// Counter-based noise

namespace {

std::uint64_t splitmix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double to_unit(std::uint64_t h) {
  return (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace

double gaussian_noise(std::uint64_t seed, std::uint64_t channel,
                      std::uint64_t k) {
  const std::uint64_t base =
      splitmix(splitmix(seed) ^ splitmix(0x517cc1b727220a95ULL + channel) ^ k);
  const double u1 = to_unit(base);
  const double u2 = to_unit(splitmix(base));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// ---------------------------------------------------------------------------
// Validation

void DisturbanceEvent::validate() const {
  if (!(t_start < t_end)) {
    throw DomainError("DisturbanceEvent: t_start must precede t_end");
  }
}

void ScenarioConfig::validate() const {
  if (!(duration > 0.0) || !(sample_period > 0.0)) {
    throw DomainError("ScenarioConfig: duration and sample_period must be positive");
  }
  for (const auto& e : events) {
    e.validate();
    if (e.t_end > duration) {
      throw DomainError("ScenarioConfig: event extends past the duration");
    }
  }
}

// ---------------------------------------------------------------------------
// Shared plumbing

namespace {

Eigen::VectorXd advance_plant(const Eigen::VectorXd& y,
                              const plant::PlantInputs& u,
                              const plant::PlantParams& pp, double t0,
                              double dt, const num::IntegratorConfig& icfg) {
  return num::integrate_interval(plant::make_rhs(u, pp), y, t0, t0 + dt, icfg);
}

double lag_blend(double dt, double tau) {
  return tau > 0.0 ? 1.0 - std::exp(-dt / tau) : 1.0;
}

struct MiniLoop {
  // Closed PC+LC loop (optionally with the EKF) used by the commissioning
  // step tests. The concentration loop stays open; p_sp is prescribed.
  const Setup* setup;
  Eigen::VectorXd y;
  ctl::PiController pc, lc;
  ekf::EstimatorState est;
  bool with_ekf = false;
  double applied_n_out, applied_m_lye;
  double t = 0.0;

  explicit MiniLoop(const Setup& s, bool ekf_on)
      : setup(&s),
        y(plant::pack(s.steady)),
        pc(s.cascade.pc),
        lc(s.cascade.lc),
        with_ekf(ekf_on),
        applied_n_out(s.nominal_inputs.n_out_gas),
        applied_m_lye(s.nominal_inputs.m_lye) {
    if (with_ekf) {
      est = ekf::initialize(s.pp, s.nominal_inputs, s.steady);
    }
  }

  // One sample tick at prescribed pressure setpoint; returns the sampled
  // plant state.
  plant::PlantState tick(double p_sp) {
    const auto& s = *setup;
    const double dt = s.model.t_s;
    plant::PlantInputs u = s.nominal_inputs;
    u.n_out_gas = applied_n_out;
    u.m_lye = applied_m_lye;
    y = advance_plant(y, u, s.pp, t, dt, s.integrator);
    t += dt;
    const plant::PlantState st = plant::unpack(y, s.pp);
    const int sep = s.pp.n;
    if (with_ekf) {
      est = ekf::ekf_predict(est, {applied_n_out, applied_m_lye}, s.noise,
                             s.model);
      ekf::Vector4 ym;
      ym << st.p[sep] / kBar, st.l, st.x_h2[sep], st.x_o2[sep];
      est = ekf::ekf_update(est, ym, s.noise);
    }
    pc.setpoint = p_sp;
    const double n_cmd = pc.step(st.p[sep] / kBar, dt);
    const double m_cmd = lc.step(st.l, dt);
    applied_n_out +=
        (n_cmd - applied_n_out) * lag_blend(dt, s.control.actuator_lag_s);
    applied_m_lye = m_cmd;
    return st;
  }
};

}  // namespace

// ---------------------------------------------------------------------------
// Commissioning

std::string TuningReport::text() const {
  std::ostringstream os;
  auto line = [&os](const char* name, const ctl::FoptdModel& m,
                    const ctl::PiGains& g) {
    os << name << ": k=" << m.k << " tau=" << m.tau << " theta=" << m.theta
       << "  ->  Kc=" << g.Kc << " tau_I=" << g.tau_I << "\n";
  };
  line("PC (pressure)      ", pc_model, pc);
  line("CC (concentration) ", cc_model, cc);
  line("LC (level)         ", lc_model, lc);
  os << "inner closed-loop time constant: " << inner_cl_tau << " s\n";
  os << "outer closed-loop target:        " << outer_target << " s\n";
  return os.str();
}

Setup make_setup(const plant::PlantParams& pp, const NominalConditions& nom,
                 const ControlSettings& control, const ekf::NoiseConfig& noise,
                 const num::IntegratorConfig& icfg) {
  pp.validate();
  Setup s;
  s.pp = pp;
  s.nominal = nom;
  s.control = control;
  s.noise = noise;
  s.integrator = icfg;
  s.nominal_inputs =
      plant::nominal_inputs(nom.I, nom.p_bar, nom.dp_bar, nom.m_flow, pp);
  s.steady = plant::steady_state(
      s.nominal_inputs, pp, plant::nominal_guess(s.nominal_inputs, nom.p_bar, pp));
  s.model.pp = pp;
  s.model.m_in = nom.m_flow;
  s.model.t_s = 0.1;

  const double ts = s.model.t_s;
  const int sep = pp.n;
  const double n_out_nom = s.nominal_inputs.n_out_gas;

  // Level loop: the process is exactly an integrator with slope -1/(rho A).
  s.tuning.lc_model =
      ctl::FoptdModel{-1.0 / (pp.rho * pp.A) * 1e6, 1e6, ts};
  s.tuning.lc = ctl::simc_tune(s.tuning.lc_model, control.lc_tau_c);
  s.cascade.lc = ctl::PiController{
      s.tuning.lc.Kc, s.tuning.lc.tau_I, s.steady.l, nom.m_flow, 0.0,
      0.0,            control.m_lye_max, 1.0};

  // Pressure loop: open-loop 5% gas-outflow step through the valve lag.
  {
    Eigen::VectorXd y = plant::pack(s.steady);
    plant::PlantInputs u = s.nominal_inputs;
    const double du = 0.05 * n_out_nom;
    double applied = n_out_nom;
    std::vector<double> p_series;
    double t = 0.0;
    const int steps = static_cast<int>(std::lround(40.0 / ts));
    p_series.reserve(steps + 1);
    p_series.push_back(plant::unpack(y, pp).p[sep] / kBar);
    for (int k = 0; k < steps; ++k) {
      applied += (n_out_nom + du - applied) *
                 lag_blend(ts, control.actuator_lag_s);
      u.n_out_gas = applied;
      y = advance_plant(y, u, pp, t, ts, s.integrator);
      t += ts;
      p_series.push_back(plant::unpack(y, pp).p[sep] / kBar);
    }
    s.tuning.pc_model = ctl::identify_integrating(p_series, ts, du);
    // Tight tuning: tau_c equals the identified effective delay.
    s.tuning.pc = ctl::simc_tune(s.tuning.pc_model, s.tuning.pc_model.theta);
  }
  s.cascade.pc = ctl::PiController{
      s.tuning.pc.Kc, s.tuning.pc.tau_I, nom.p_bar, n_out_nom, 0.0,
      0.0,            control.n_out_max, 1.0};

  s.cascade.hto_sp = control.hto_sp;
  s.cascade.p_sp_min = control.p_sp_min;
  s.cascade.p_sp_max = control.p_sp_max;

  // Closed inner loop time constant from a setpoint step.
  {
    MiniLoop loop(s, /*ekf_on=*/false);
    std::vector<double> p_series;
    const int steps = static_cast<int>(std::lround(120.0 / ts));
    p_series.reserve(steps);
    for (int k = 0; k < steps; ++k) {
      const plant::PlantState st = loop.tick(nom.p_bar - 1.0);
      p_series.push_back(st.p[sep] / kBar);
    }
    const ctl::FoptdModel cl = ctl::identify_foptd(p_series, ts, -1.0);
    s.tuning.inner_cl_tau = cl.tau;
  }

  // Concentration loop: p_sp step with the inner loop closed; the feedback
  // signal is the EKF pipe-impurity estimate on noiseless measurements.
  {
    MiniLoop loop(s, /*ekf_on=*/true);
    std::vector<double> h_series;
    const int steps = static_cast<int>(std::lround(600.0 / ts));
    h_series.reserve(steps);
    for (int k = 0; k < steps; ++k) {
      loop.tick(nom.p_bar - 1.0);
      h_series.push_back(ekf::estimated_pipe_hto(loop.est));
    }
    s.tuning.cc_model = ctl::identify_foptd(h_series, ts, -1.0);
  }
  s.tuning.outer_target = control.outer_ratio * s.tuning.inner_cl_tau;
  const double tau_c_cc =
      std::max(s.tuning.outer_target - s.tuning.cc_model.theta,
               s.tuning.cc_model.theta);
  s.tuning.cc = ctl::simc_tune(s.tuning.cc_model, tau_c_cc);
  s.cascade.cc = ctl::PiController{
      s.tuning.cc.Kc,    s.tuning.cc.tau_I, control.hto_sp,
      control.p_sp_max,  0.0,               control.p_sp_min,
      control.p_sp_max,  1.0};
  s.cascade.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Calibration

namespace {

double steady_sep_hto(const Setup& s, double I, double dp_bar) {
  const plant::PlantInputs u = plant::nominal_inputs(
      I, s.nominal.p_bar, dp_bar, s.nominal.m_flow, s.pp);
  const plant::PlantState ss = plant::steady_state(
      u, s.pp, plant::nominal_guess(u, s.nominal.p_bar, s.pp));
  const int sep = s.pp.n;
  return plant::hto(ss.x_h2[sep], ss.x_o2[sep]);
}

double bisect_to_band(const std::function<double(double)>& f, double benign,
                      double target, bool increasing, const char* what) {
  // Auto-brackets by geometric stepping away from the benign value (toward
  // higher impurity), then bisects f into [target, 1.2 target]. The solver
  // may fail at extreme inputs; that counts as "impurity too high".
  auto eval = [&](double v) {
    try {
      return f(v);
    } catch (const std::exception&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  const double aim = 1.1 * target;
  double lo = benign;  // impurity below target
  double hi = benign;  // impurity above 1.2 target
  bool bracketed = false;
  for (int s = 0; s < 24; ++s) {
    hi = increasing ? hi * 2.0 : hi * 0.5;
    if (eval(hi) > 1.2 * target) {
      bracketed = true;
      break;
    }
    lo = hi;
  }
  if (!bracketed) {
    throw CalibrationError(std::string("calibrate_disturbances: target HTO "
                                       "unreachable for ") +
                           what);
  }
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = eval(mid);
    if (fm >= target && fm <= 1.2 * target &&
        std::abs(fm - aim) < 0.08 * target) {
      return mid;
    }
    if (fm < aim) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  throw CalibrationError(std::string("calibrate_disturbances: bisection did "
                                     "not settle for ") +
                         what);
}

}  // namespace

Calibration calibrate_disturbances(const Setup& setup, double target_hto) {
  const double nominal_hto =
      steady_sep_hto(setup, setup.nominal.I, setup.nominal.dp_bar);
  if (nominal_hto >= target_hto) {
    throw CalibrationError(
        "calibrate_disturbances: nominal HTO already above the target");
  }
  Calibration c;
  c.I_low = bisect_to_band(
      [&](double I) { return steady_sep_hto(setup, I, setup.nominal.dp_bar); },
      setup.nominal.I, target_hto, /*increasing=*/false, "current density");
  c.dp_high = bisect_to_band(
      [&](double dp) { return steady_sep_hto(setup, setup.nominal.I, dp); },
      setup.nominal.dp_bar, target_hto, /*increasing=*/true,
      "pressure difference");
  return c;
}

std::vector<DisturbanceEvent> standard_disturbance_sequence(const Calibration& c) {
  return {
      {30.0 * 60.0, 60.0 * 60.0, Channel::CurrentDensity, c.I_low},
      {90.0 * 60.0, 120.0 * 60.0, Channel::PressureDifference, c.dp_high},
  };
}

// ---------------------------------------------------------------------------
// The experiment loop

RunResult run(const ScenarioConfig& cfg, const Setup& setup) {
  cfg.validate();
  const plant::PlantParams& pp = setup.pp;
  const int sep = pp.n;
  const int m = pp.n + 1;
  const double ts = cfg.sample_period;

  const bool noisy = cfg.mode == Mode::ClosedLoop &&
                     cfg.feedback_source == ctl::FeedbackSource::Estimate;

  auto inputs_at = [&](double t) {
    plant::PlantInputs u = setup.nominal_inputs;
    for (const auto& e : cfg.events) {
      if (t >= e.t_start && t < e.t_end) {
        if (e.channel == Channel::CurrentDensity) {
          u.I = e.value;
        } else {
          u.dp = e.value;
        }
      }
    }
    return u;
  };

  Eigen::VectorXd y = plant::pack(setup.steady);
  ekf::EstimatorState est =
      ekf::initialize(pp, setup.nominal_inputs, setup.steady);
  ctl::CascadeConfig cas = setup.cascade;  // fresh controller states
  ctl::PiController open_pc = setup.cascade.pc;
  ctl::PiController open_lc = setup.cascade.lc;

  double applied_n_out = setup.nominal_inputs.n_out_gas;
  double applied_m_lye = setup.nominal_inputs.m_lye;
  double p_sp = cfg.mode == Mode::OpenLoop ? cfg.open_loop_p_sp
                                           : setup.control.p_sp_max;

  const long K = std::lround(cfg.duration / ts);
  RunResult res;
  res.records.reserve(K + 1);
  res.min_P_eigenvalue = std::numeric_limits<double>::infinity();

  auto record_row = [&](double t, const plant::PlantState& st,
                        const ekf::Vector4& ym, double hto_est,
                        const plant::PlantInputs& u_now) {
    TimeSeriesRecord r;
    r.t = t;
    r.hto_true.resize(m);
    r.alarm.resize(m);
    r.p_bar.resize(m);
    for (int i = 0; i < m; ++i) {
      r.hto_true[i] = plant::hto(st.x_h2[i], st.x_o2[i]);
      r.alarm[i] = r.hto_true[i] > 0.02;
      r.p_bar[i] = st.p[i] / kBar;
      r.comp_sum_err =
          std::max(r.comp_sum_err, std::abs(st.x_h2[i] + st.x_o2[i] - 1.0));
    }
    r.hto_meas = plant::hto(ym[2], ym[3]);
    r.hto_est = hto_est;
    r.l = st.l;
    r.p_sp = p_sp;
    r.n_out_gas = applied_n_out;
    r.m_lye = applied_m_lye;
    r.I = u_now.I;
    r.dp = u_now.dp;
    r.meas_p_bar = ym[0];
    r.meas_l = ym[1];
    r.meas_x_h2 = ym[2];
    r.meas_x_o2 = ym[3];
    res.peak_hto_pipe = std::max(res.peak_hto_pipe, r.hto_true[sep - 1]);
    res.peak_hto_sep = std::max(res.peak_hto_sep, r.hto_true[sep]);
    res.records.push_back(std::move(r));
  };

  {
    const plant::PlantState st0 = setup.steady;
    ekf::Vector4 y0;
    y0 << st0.p[sep] / kBar, st0.l, st0.x_h2[sep], st0.x_o2[sep];
    record_row(0.0, st0, y0, ekf::estimated_pipe_hto(est), inputs_at(0.0));
  }

  for (long k = 1; k <= K; ++k) {
    const double t_prev = (k - 1) * ts;
    const double t_now = k * ts;

    plant::PlantInputs u = inputs_at(t_prev);
    u.n_out_gas = applied_n_out;
    u.m_lye = applied_m_lye;
    y = advance_plant(y, u, pp, t_prev, ts, setup.integrator);
    const plant::PlantState st = plant::unpack(y, pp);

    ekf::Vector4 ym;
    ym << st.p[sep] / kBar, st.l, st.x_h2[sep], st.x_o2[sep];
    if (noisy) {
      const auto& ns = cfg.meas_noise_std;
      ym[0] += ns.p_bar * gaussian_noise(cfg.seed, 0, k);
      ym[1] += ns.l_m * gaussian_noise(cfg.seed, 1, k);
      ym[2] += ns.x_h2 * gaussian_noise(cfg.seed, 2, k);
      ym[3] += ns.x_o2 * gaussian_noise(cfg.seed, 3, k);
    }

    est = ekf::ekf_predict(est, {applied_n_out, applied_m_lye}, setup.noise,
                           setup.model);
    est = ekf::ekf_update(est, ym, setup.noise);
    const double hto_est = ekf::estimated_pipe_hto(est);

    res.worst_P_asymmetry =
        std::max(res.worst_P_asymmetry,
                 (est.P - est.P.transpose()).cwiseAbs().maxCoeff());
    const Eigen::SelfAdjointEigenSolver<ekf::Matrix6> es(est.P);
    res.min_P_eigenvalue =
        std::min(res.min_P_eigenvalue, es.eigenvalues().minCoeff());

    double n_cmd, m_cmd;
    if (cfg.mode == Mode::ClosedLoop) {
      const double fb = cfg.feedback_source == ctl::FeedbackSource::Estimate
                            ? hto_est
                            : plant::hto(ym[2], ym[3]);
      const ctl::Actuation a =
          ctl::cascade_step(cas, fb, ym[0], ym[1], ts);
      p_sp = a.p_sp;
      n_cmd = a.n_out_gas;
      m_cmd = a.m_lye;
    } else {
      open_pc.setpoint = cfg.open_loop_p_sp;
      p_sp = cfg.open_loop_p_sp;
      n_cmd = open_pc.step(ym[0], ts);
      m_cmd = open_lc.step(ym[1], ts);
    }
    applied_n_out +=
        (n_cmd - applied_n_out) * lag_blend(ts, setup.control.actuator_lag_s);
    applied_m_lye = m_cmd;

    record_row(t_now, st, ym, hto_est, inputs_at(t_now));
  }

  // Per-event out-of-bound time, counted over the event interval itself.
  std::vector<DisturbanceEvent> evs = cfg.events;
  std::sort(evs.begin(), evs.end(), [](const auto& a, const auto& b) {
    return a.t_start < b.t_start;
  });
  for (const auto& e : evs) {
    res.t_oob_per_event_min.push_back(t_oob(res.records, 0.02, e.t_start, e.t_end));
  }
  return res;
}

RunResult run(const ScenarioConfig& cfg, const plant::PlantParams& pp) {
  const Setup setup = make_setup(pp, {}, {});
  return run(cfg, setup);
}

double t_oob(const std::vector<TimeSeriesRecord>& records, double alarm_limit,
             double t0, double t1) {
  if (records.empty()) {
    throw DomainError("t_oob: empty record set");
  }
  double seconds = 0.0;
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.t <= t0 || r.t > t1) continue;
    const double worst =
        *std::max_element(r.hto_true.begin(), r.hto_true.end());
    if (worst > alarm_limit) {
      seconds += r.t - records[i - 1].t;
    }
  }
  return seconds / 60.0;
}

std::string Table1::text() const {
  std::ostringstream os;
  os << "t_OOB [min]      open-loop   estimate-fb   measurement-fb\n";
  for (std::size_t i = 0; i < open_loop_min.size(); ++i) {
    os << "disturbance " << (i + 1) << "       " << open_loop_min[i]
       << "        " << estimate_fb_min[i] << "          "
       << measurement_fb_min[i] << "\n";
  }
  if (!open_loop_min.empty() && estimate_fb_min[0] > 0.0) {
    os << "disturbance-1 measurement/estimate ratio: "
       << measurement_fb_min[0] / estimate_fb_min[0] << "\n";
  }
  return os.str();
}

Table1 table1_report(const RunResult& open_loop, const RunResult& estimate_fb,
                     const RunResult& measurement_fb,
                     const std::vector<DisturbanceEvent>& events,
                     double duration_s) {
  (void)events;
  (void)duration_s;
  Table1 t;
  t.open_loop_min = open_loop.t_oob_per_event_min;
  t.estimate_fb_min = estimate_fb.t_oob_per_event_min;
  t.measurement_fb_min = measurement_fb.t_oob_per_event_min;
  return t;
}

}  // namespace htosim::sim
