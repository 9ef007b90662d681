#pragma once

#include <string>
#include <vector>

#include "htosim/scenario.hpp"

namespace htosim::io {

/// On-disk run configuration. All keys carry unit suffixes; unknown keys are
/// rejected so typos fail loudly instead of silently using a default.
struct AppConfig {
  int schema_version = 1;
  sim::NominalConditions nominal;
  sim::ControlSettings control;
  sim::ScenarioConfig scenario;
  plant::PlantParams plant;
  bool auto_calibrate = true;      // derive event magnitudes at startup
  double calibration_target = 0.025;
};

/// Parses the JSON text of a config file. Throws ConfigError on malformed
/// JSON, unknown keys, or a schema_version this build does not understand.
AppConfig parse_config(const std::string& json_text);

AppConfig load_config(const std::string& path);

/// Inverse of parse_config: serialize(parse_config(s)) round-trips all values.
std::string serialize(const AppConfig& cfg);

/// Writes the run records as CSV with 9 significant digits. The write is
/// atomic: data goes to <path>.tmp and is renamed into place.
void write_csv(const std::string& path,
               const std::vector<sim::TimeSeriesRecord>& records,
               int n_compartments);

/// Reads a CSV produced by write_csv. Column layout is checked against the
/// header; throws ConfigError on mismatch.
std::vector<sim::TimeSeriesRecord> read_csv(const std::string& path,
                                            int n_compartments);

/// Re-runs the estimator over recorded measurements and actuation; returns
/// the records with hto_est replaced by the offline estimate.
std::vector<sim::TimeSeriesRecord> replay_estimator(
    const std::vector<sim::TimeSeriesRecord>& records, const sim::Setup& setup);

/// Two-panel SVG: impurity traces (pipe truth, separator truth, estimate)
/// with the alarm limit as a dotted line, and the actuation/pressure traces.
void emit_plots(const std::string& path,
                const std::vector<sim::TimeSeriesRecord>& records,
                double alarm_limit = 0.02);

/// Sidecar metadata written next to each CSV.
struct RunManifest {
  std::string config_json;    // exact configuration used
  std::string config_digest;  // FNV-1a hex digest of config_json
  std::uint64_t seed = 0;
  std::string csv_path;
};

std::string fnv1a_hex(const std::string& text);

void write_manifest(const std::string& path, const RunManifest& m);

}  // namespace htosim::io
