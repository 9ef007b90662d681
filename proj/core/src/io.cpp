#include "htosim/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace htosim::io {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

namespace {

void require_keys(const json& obj, const char* where,
                  std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    const bool known =
        std::any_of(allowed.begin(), allowed.end(),
                    [&](const char* k) { return it.key() == k; });
    if (!known) {
      throw ConfigError(std::string("unknown key \"") + it.key() + "\" in " +
                        where);
    }
  }
}

double num_at(const json& obj, const char* key, double fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number()) {
    throw ConfigError(std::string("key \"") + key + "\" must be a number");
  }
  return obj[key].get<double>();
}

}  // namespace

AppConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) {
    throw ConfigError("config root must be a JSON object");
  }
  require_keys(j, "config root",
               {"schema_version", "nominal", "control", "scenario", "plant",
                "auto_calibrate", "calibration_target"});

  AppConfig cfg;
  if (!j.contains("schema_version") ||
      !j["schema_version"].is_number_integer()) {
    throw ConfigError("schema_version is required and must be an integer");
  }
  cfg.schema_version = j["schema_version"].get<int>();
  if (cfg.schema_version != 1) {
    throw ConfigError("unsupported schema_version (expected 1)");
  }

  if (j.contains("nominal")) {
    const json& n = j["nominal"];
    require_keys(n, "nominal",
                 {"current_density_A_m2", "pressure_bar",
                  "pressure_difference_bar", "lye_flow_kg_s"});
    cfg.nominal.I = num_at(n, "current_density_A_m2", cfg.nominal.I);
    cfg.nominal.p_bar = num_at(n, "pressure_bar", cfg.nominal.p_bar);
    cfg.nominal.dp_bar =
        num_at(n, "pressure_difference_bar", cfg.nominal.dp_bar);
    cfg.nominal.m_flow = num_at(n, "lye_flow_kg_s", cfg.nominal.m_flow);
  }

  if (j.contains("control")) {
    const json& c = j["control"];
    require_keys(c, "control",
                 {"hto_setpoint", "p_sp_min_bar", "p_sp_max_bar",
                  "actuator_lag_s", "n_out_max_mol_s", "m_lye_max_kg_s",
                  "lc_tau_c_s", "outer_ratio"});
    cfg.control.hto_sp = num_at(c, "hto_setpoint", cfg.control.hto_sp);
    cfg.control.p_sp_min = num_at(c, "p_sp_min_bar", cfg.control.p_sp_min);
    cfg.control.p_sp_max = num_at(c, "p_sp_max_bar", cfg.control.p_sp_max);
    cfg.control.actuator_lag_s =
        num_at(c, "actuator_lag_s", cfg.control.actuator_lag_s);
    cfg.control.n_out_max =
        num_at(c, "n_out_max_mol_s", cfg.control.n_out_max);
    cfg.control.m_lye_max =
        num_at(c, "m_lye_max_kg_s", cfg.control.m_lye_max);
    cfg.control.lc_tau_c = num_at(c, "lc_tau_c_s", cfg.control.lc_tau_c);
    cfg.control.outer_ratio = num_at(c, "outer_ratio", cfg.control.outer_ratio);
  }

  if (j.contains("scenario")) {
    const json& s = j["scenario"];
    require_keys(s, "scenario",
                 {"duration_s", "mode", "feedback", "open_loop_p_sp_bar",
                  "seed", "sample_period_s", "noise_std", "events"});
    cfg.scenario.duration = num_at(s, "duration_s", cfg.scenario.duration);
    if (s.contains("mode")) {
      const std::string m = s["mode"].get<std::string>();
      if (m == "open_loop") {
        cfg.scenario.mode = sim::Mode::OpenLoop;
      } else if (m == "closed_loop") {
        cfg.scenario.mode = sim::Mode::ClosedLoop;
      } else {
        throw ConfigError("mode must be \"open_loop\" or \"closed_loop\"");
      }
    }
    if (s.contains("feedback")) {
      const std::string f = s["feedback"].get<std::string>();
      if (f == "measurement") {
        cfg.scenario.feedback_source = ctl::FeedbackSource::Measurement;
      } else if (f == "estimate") {
        cfg.scenario.feedback_source = ctl::FeedbackSource::Estimate;
      } else {
        throw ConfigError("feedback must be \"measurement\" or \"estimate\"");
      }
    }
    cfg.scenario.open_loop_p_sp =
        num_at(s, "open_loop_p_sp_bar", cfg.scenario.open_loop_p_sp);
    if (s.contains("seed")) {
      if (!s["seed"].is_number_unsigned()) {
        throw ConfigError("seed must be a nonnegative integer");
      }
      cfg.scenario.seed = s["seed"].get<std::uint64_t>();
    }
    cfg.scenario.sample_period =
        num_at(s, "sample_period_s", cfg.scenario.sample_period);
    if (s.contains("noise_std")) {
      const json& ns = s["noise_std"];
      require_keys(ns, "noise_std", {"p_bar", "l_m", "x_h2", "x_o2"});
      cfg.scenario.meas_noise_std.p_bar =
          num_at(ns, "p_bar", cfg.scenario.meas_noise_std.p_bar);
      cfg.scenario.meas_noise_std.l_m =
          num_at(ns, "l_m", cfg.scenario.meas_noise_std.l_m);
      cfg.scenario.meas_noise_std.x_h2 =
          num_at(ns, "x_h2", cfg.scenario.meas_noise_std.x_h2);
      cfg.scenario.meas_noise_std.x_o2 =
          num_at(ns, "x_o2", cfg.scenario.meas_noise_std.x_o2);
    }
    if (s.contains("events")) {
      if (!s["events"].is_array()) {
        throw ConfigError("events must be an array");
      }
      for (const json& e : s["events"]) {
        require_keys(e, "event",
                     {"t_start_s", "t_end_s", "channel", "value"});
        sim::DisturbanceEvent ev;
        ev.t_start = num_at(e, "t_start_s", 0.0);
        ev.t_end = num_at(e, "t_end_s", 0.0);
        const std::string ch = e.at("channel").get<std::string>();
        if (ch == "current_density_A_m2") {
          ev.channel = sim::Channel::CurrentDensity;
        } else if (ch == "pressure_difference_bar") {
          ev.channel = sim::Channel::PressureDifference;
        } else {
          throw ConfigError(
              "event channel must be \"current_density_A_m2\" or "
              "\"pressure_difference_bar\"");
        }
        ev.value = num_at(e, "value", 0.0);
        cfg.scenario.events.push_back(ev);
      }
    }
  }

  if (j.contains("plant")) {
    const json& p = j["plant"];
    require_keys(p, "plant",
                 {"electrode_area_m2", "membrane_thickness_m", "temperature_K",
                  "pipe_segments", "pipe_length_m", "pipe_radius_m",
                  "gas_viscosity_Pa_s", "separator_volume_m3",
                  "separator_area_m2", "lye_density_kg_m3"});
    cfg.plant.A_c = num_at(p, "electrode_area_m2", cfg.plant.A_c);
    cfg.plant.d_m = num_at(p, "membrane_thickness_m", cfg.plant.d_m);
    cfg.plant.T = num_at(p, "temperature_K", cfg.plant.T);
    if (p.contains("pipe_segments")) {
      if (!p["pipe_segments"].is_number_integer()) {
        throw ConfigError("pipe_segments must be an integer");
      }
      cfg.plant.n = p["pipe_segments"].get<int>();
    }
    cfg.plant.l_p = num_at(p, "pipe_length_m", cfg.plant.l_p);
    cfg.plant.r = num_at(p, "pipe_radius_m", cfg.plant.r);
    cfg.plant.eta = num_at(p, "gas_viscosity_Pa_s", cfg.plant.eta);
    cfg.plant.V_t = num_at(p, "separator_volume_m3", cfg.plant.V_t);
    cfg.plant.A = num_at(p, "separator_area_m2", cfg.plant.A);
    cfg.plant.rho = num_at(p, "lye_density_kg_m3", cfg.plant.rho);
  }

  if (j.contains("auto_calibrate")) {
    if (!j["auto_calibrate"].is_boolean()) {
      throw ConfigError("auto_calibrate must be a boolean");
    }
    cfg.auto_calibrate = j["auto_calibrate"].get<bool>();
  }
  cfg.calibration_target =
      num_at(j, "calibration_target", cfg.calibration_target);

  cfg.plant.validate();
  cfg.scenario.validate();
  return cfg;
}

AppConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config file: " + path);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize(const AppConfig& cfg) {
  json s_events = json::array();
  for (const auto& e : cfg.scenario.events) {
    s_events.push_back(
        {{"t_start_s", e.t_start},
         {"t_end_s", e.t_end},
         {"channel", e.channel == sim::Channel::CurrentDensity
                         ? "current_density_A_m2"
                         : "pressure_difference_bar"},
         {"value", e.value}});
  }
  json j = {
      {"schema_version", cfg.schema_version},
      {"nominal",
       {{"current_density_A_m2", cfg.nominal.I},
        {"pressure_bar", cfg.nominal.p_bar},
        {"pressure_difference_bar", cfg.nominal.dp_bar},
        {"lye_flow_kg_s", cfg.nominal.m_flow}}},
      {"control",
       {{"hto_setpoint", cfg.control.hto_sp},
        {"p_sp_min_bar", cfg.control.p_sp_min},
        {"p_sp_max_bar", cfg.control.p_sp_max},
        {"actuator_lag_s", cfg.control.actuator_lag_s},
        {"n_out_max_mol_s", cfg.control.n_out_max},
        {"m_lye_max_kg_s", cfg.control.m_lye_max},
        {"lc_tau_c_s", cfg.control.lc_tau_c},
        {"outer_ratio", cfg.control.outer_ratio}}},
      {"scenario",
       {{"duration_s", cfg.scenario.duration},
        {"mode", cfg.scenario.mode == sim::Mode::OpenLoop ? "open_loop"
                                                          : "closed_loop"},
        {"feedback",
         cfg.scenario.feedback_source == ctl::FeedbackSource::Measurement
             ? "measurement"
             : "estimate"},
        {"open_loop_p_sp_bar", cfg.scenario.open_loop_p_sp},
        {"seed", cfg.scenario.seed},
        {"sample_period_s", cfg.scenario.sample_period},
        {"noise_std",
         {{"p_bar", cfg.scenario.meas_noise_std.p_bar},
          {"l_m", cfg.scenario.meas_noise_std.l_m},
          {"x_h2", cfg.scenario.meas_noise_std.x_h2},
          {"x_o2", cfg.scenario.meas_noise_std.x_o2}}},
        {"events", s_events}}},
      {"plant",
       {{"electrode_area_m2", cfg.plant.A_c},
        {"membrane_thickness_m", cfg.plant.d_m},
        {"temperature_K", cfg.plant.T},
        {"pipe_segments", cfg.plant.n},
        {"pipe_length_m", cfg.plant.l_p},
        {"pipe_radius_m", cfg.plant.r},
        {"gas_viscosity_Pa_s", cfg.plant.eta},
        {"separator_volume_m3", cfg.plant.V_t},
        {"separator_area_m2", cfg.plant.A},
        {"lye_density_kg_m3", cfg.plant.rho}}},
      {"auto_calibrate", cfg.auto_calibrate},
      {"calibration_target", cfg.calibration_target},
  };
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string csv_header(int m) {
  std::ostringstream h;
  h << "t_s";
  for (int i = 0; i < m; ++i) h << ",hto_true_" << i;
  h << ",hto_meas,hto_est";
  for (int i = 0; i < m; ++i) h << ",p_bar_" << i;
  h << ",l_m,p_sp_bar,n_out_gas_mol_s,m_lye_kg_s,I_A_m2,dp_bar";
  for (int i = 0; i < m; ++i) h << ",alarm_" << i;
  h << ",meas_p_bar,meas_l_m,meas_x_h2,meas_x_o2";
  return h.str();
}

void put(std::ostringstream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  os << ',' << buf;
}

// Full round-trip precision for the channels the offline estimator replay
// consumes; 9 significant digits would perturb the replayed estimate above
// its reproduction tolerance.
void put_exact(std::ostringstream& os, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  os << ',' << buf;
}

}  // namespace

void write_csv(const std::string& path,
               const std::vector<sim::TimeSeriesRecord>& records,
               int n_compartments) {
  const int m = n_compartments;
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) {
      throw ConfigError("cannot open output file: " + tmp);
    }
    out << csv_header(m) << '\n';
    for (const auto& r : records) {
      if (static_cast<int>(r.hto_true.size()) != m) {
        throw DomainError("write_csv: record width does not match compartment count");
      }
      std::ostringstream os;
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.9g", r.t);
      os << buf;
      for (int i = 0; i < m; ++i) put(os, r.hto_true[i]);
      put(os, r.hto_meas);
      put(os, r.hto_est);
      for (int i = 0; i < m; ++i) put(os, r.p_bar[i]);
      put(os, r.l);
      put(os, r.p_sp);
      put_exact(os, r.n_out_gas);
      put_exact(os, r.m_lye);
      put(os, r.I);
      put(os, r.dp);
      for (int i = 0; i < m; ++i) os << ',' << (r.alarm[i] ? 1 : 0);
      put_exact(os, r.meas_p_bar);
      put_exact(os, r.meas_l);
      put_exact(os, r.meas_x_h2);
      put_exact(os, r.meas_x_o2);
      out << os.str() << '\n';
    }
    if (!out.good()) {
      throw ConfigError("write failed: " + tmp);
    }
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw ConfigError("cannot move " + tmp + " into place");
  }
}

std::vector<sim::TimeSeriesRecord> read_csv(const std::string& path,
                                            int n_compartments) {
  const int m = n_compartments;
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open CSV file: " + path);
  }
  std::string line;
  if (!std::getline(in, line) || line != csv_header(m)) {
    throw ConfigError("CSV header does not match the expected layout");
  }
  std::vector<sim::TimeSeriesRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        f.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ConfigError("CSV parse error at line " + std::to_string(lineno));
      }
    }
    const std::size_t expect = 1 + 3 * m + 12;
    if (f.size() != expect) {
      throw ConfigError("CSV field count mismatch at line " +
                        std::to_string(lineno));
    }
    sim::TimeSeriesRecord r;
    std::size_t k = 0;
    r.t = f[k++];
    r.hto_true.assign(f.begin() + k, f.begin() + k + m);
    k += m;
    r.hto_meas = f[k++];
    r.hto_est = f[k++];
    r.p_bar.assign(f.begin() + k, f.begin() + k + m);
    k += m;
    r.l = f[k++];
    r.p_sp = f[k++];
    r.n_out_gas = f[k++];
    r.m_lye = f[k++];
    r.I = f[k++];
    r.dp = f[k++];
    r.alarm.resize(m);
    for (int i = 0; i < m; ++i) r.alarm[i] = f[k++] != 0.0;
    r.meas_p_bar = f[k++];
    r.meas_l = f[k++];
    r.meas_x_h2 = f[k++];
    r.meas_x_o2 = f[k++];
    out.push_back(std::move(r));
  }
  if (out.empty()) {
    throw ConfigError("CSV contains no data rows: " + path);
  }
  return out;
}

std::vector<sim::TimeSeriesRecord> replay_estimator(
    const std::vector<sim::TimeSeriesRecord>& records,
    const sim::Setup& setup) {
  std::vector<sim::TimeSeriesRecord> out = records;
  ekf::EstimatorState est =
      ekf::initialize(setup.pp, setup.nominal_inputs, setup.steady);
  out[0].hto_est = ekf::estimated_pipe_hto(est);
  for (std::size_t k = 1; k < out.size(); ++k) {
    // Row k-1 holds the actuation applied over (t_{k-1}, t_k].
    const ekf::Inputs u{out[k - 1].n_out_gas, out[k - 1].m_lye};
    est = ekf::ekf_predict(est, u, setup.noise, setup.model);
    ekf::Vector4 y;
    y << out[k].meas_p_bar, out[k].meas_l, out[k].meas_x_h2, out[k].meas_x_o2;
    est = ekf::ekf_update(est, y, setup.noise);
    out[k].hto_est = ekf::estimated_pipe_hto(est);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Plots

namespace {

struct Panel {
  double x0, y0, w, h;       // drawing area in SVG units
  double tmin, tmax, vmin, vmax;

  double X(double t) const { return x0 + (t - tmin) / (tmax - tmin) * w; }
  double Y(double v) const { return y0 + h - (v - vmin) / (vmax - vmin) * h; }
};

void polyline(std::ostringstream& os, const Panel& pn,
              const std::vector<sim::TimeSeriesRecord>& rec,
              const std::function<double(const sim::TimeSeriesRecord&)>& get,
              const char* color, const char* dash = nullptr) {
  os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.2\"";
  if (dash) os << " stroke-dasharray=\"" << dash << "\"";
  os << " points=\"";
  const std::size_t stride = std::max<std::size_t>(1, rec.size() / 2000);
  for (std::size_t i = 0; i < rec.size(); i += stride) {
    os << pn.X(rec[i].t / 60.0) << ',' << pn.Y(get(rec[i])) << ' ';
  }
  os << "\"/>\n";
}

void frame(std::ostringstream& os, const Panel& pn, const char* ylabel) {
  os << "<rect x=\"" << pn.x0 << "\" y=\"" << pn.y0 << "\" width=\"" << pn.w
     << "\" height=\"" << pn.h
     << "\" fill=\"none\" stroke=\"#444\" stroke-width=\"1\"/>\n";
  os << "<text x=\"" << pn.x0 << "\" y=\"" << pn.y0 - 6
     << "\" font-size=\"12\" fill=\"#222\">" << ylabel << "</text>\n";
  for (int k = 0; k <= 5; ++k) {
    const double t = pn.tmin + k * (pn.tmax - pn.tmin) / 5.0;
    os << "<text x=\"" << pn.X(t) - 8 << "\" y=\"" << pn.y0 + pn.h + 14
       << "\" font-size=\"10\" fill=\"#222\">" << static_cast<int>(t)
       << "</text>\n";
  }
}

}  // namespace

void emit_plots(const std::string& path,
                const std::vector<sim::TimeSeriesRecord>& records,
                double alarm_limit) {
  if (records.empty()) {
    throw DomainError("emit_plots: empty record set");
  }
  const double tmax = records.back().t / 60.0;
  const int sep = static_cast<int>(records.front().hto_true.size()) - 1;

  double hmax = alarm_limit * 1.2;
  double pmin = 1e300, pmax = -1e300;
  for (const auto& r : records) {
    hmax = std::max({hmax, r.hto_true[sep - 1], r.hto_true[sep], r.hto_est});
    pmin = std::min(pmin, r.p_bar[sep]);
    pmax = std::max(pmax, r.p_bar[sep]);
  }
  const double ppad = std::max(0.5, 0.05 * (pmax - pmin));

  Panel top{60, 30, 800, 250, 0, tmax, 0, hmax * 1.05};
  Panel bot{60, 340, 800, 250, 0, tmax, pmin - ppad, pmax + ppad};

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"900\" "
        "height=\"640\" viewBox=\"0 0 900 640\">\n"
        "<rect width=\"900\" height=\"640\" fill=\"white\"/>\n";

  frame(os, top, "hydrogen-in-oxygen fraction (time in minutes)");
  polyline(os, top, records,
           [&](const sim::TimeSeriesRecord& r) { return r.hto_true[sep - 1]; },
           "#c22");
  polyline(os, top, records,
           [&](const sim::TimeSeriesRecord& r) { return r.hto_true[sep]; },
           "#26c");
  polyline(os, top, records,
           [](const sim::TimeSeriesRecord& r) { return r.hto_est; }, "#181",
           "5,3");
  // Alarm limit as a dotted line.
  os << "<line x1=\"" << top.X(0) << "\" y1=\"" << top.Y(alarm_limit)
     << "\" x2=\"" << top.X(tmax) << "\" y2=\"" << top.Y(alarm_limit)
     << "\" stroke=\"#000\" stroke-width=\"1\" stroke-dasharray=\"2,4\"/>\n";
  os << "<text x=\"620\" y=\"46\" font-size=\"11\" fill=\"#c22\">pipe "
        "truth</text>\n"
        "<text x=\"620\" y=\"60\" font-size=\"11\" fill=\"#26c\">separator "
        "truth</text>\n"
        "<text x=\"620\" y=\"74\" font-size=\"11\" fill=\"#181\">pipe "
        "estimate</text>\n";

  frame(os, bot, "separator pressure [bar] and setpoint");
  polyline(os, bot, records,
           [&](const sim::TimeSeriesRecord& r) { return r.p_bar[sep]; },
           "#26c");
  polyline(os, bot, records,
           [](const sim::TimeSeriesRecord& r) { return r.p_sp; }, "#c22",
           "5,3");
  os << "</svg>\n";

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) {
      throw ConfigError("cannot open output file: " + tmp);
    }
    out << os.str();
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw ConfigError("cannot move " + tmp + " into place");
  }
}

// ---------------------------------------------------------------------------
// Manifest

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

void write_manifest(const std::string& path, const RunManifest& m) {
  json j = {
      {"config", json::parse(m.config_json)},
      {"config_digest", m.config_digest},
      {"seed", m.seed},
      {"csv_path", m.csv_path},
  };
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) {
      throw ConfigError("cannot open output file: " + tmp);
    }
    out << j.dump(2) << '\n';
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw ConfigError("cannot move " + tmp + " into place");
  }
}

}  // namespace htosim::io
