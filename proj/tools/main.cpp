// Command-line front end: simulate / replay / tune / table1.
//
// Exit codes: 0 success, 1 usage or configuration error,
// 2 runtime failure (solver, calibration, I/O).

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "htosim/io.hpp"
#include "htosim/scenario.hpp"

namespace {

using namespace htosim;

struct CommonArgs {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
};

io::AppConfig load_or_default(const CommonArgs& a) {
  io::AppConfig cfg;
  if (!a.config_path.empty()) {
    cfg = io::load_config(a.config_path);
  }
  if (a.seed) {
    cfg.scenario.seed = *a.seed;
  }
  return cfg;
}

sim::Setup build_setup(const io::AppConfig& cfg) {
  return sim::make_setup(cfg.plant, cfg.nominal, cfg.control);
}

/// Fills in the two-pulse disturbance sequence when the config asks for
/// auto-calibration and supplies no explicit events.
void maybe_calibrate(io::AppConfig& cfg, const sim::Setup& setup) {
  if (cfg.auto_calibrate && cfg.scenario.events.empty()) {
    const sim::Calibration cal =
        sim::calibrate_disturbances(setup, cfg.calibration_target);
    cfg.scenario.events = sim::standard_disturbance_sequence(cal);
  }
}

void write_outputs(const io::AppConfig& cfg, const sim::RunResult& res,
                   const std::string& out_dir, const std::string& stem) {
  std::filesystem::create_directories(out_dir);
  const std::string csv = out_dir + "/" + stem + ".csv";
  io::write_csv(csv, res.records, cfg.plant.n + 1);
  io::emit_plots(out_dir + "/" + stem + ".svg", res.records);
  io::RunManifest mf;
  mf.config_json = io::serialize(cfg);
  mf.config_digest = io::fnv1a_hex(mf.config_json);
  mf.seed = cfg.scenario.seed;
  mf.csv_path = csv;
  io::write_manifest(out_dir + "/" + stem + ".manifest.json", mf);
  std::printf("wrote %s\n", csv.c_str());
}

int cmd_simulate(const CommonArgs& a) {
  io::AppConfig cfg = load_or_default(a);
  const sim::Setup setup = build_setup(cfg);
  maybe_calibrate(cfg, setup);
  const sim::RunResult res = sim::run(cfg.scenario, setup);
  write_outputs(cfg, res, a.out_dir, "run");
  for (std::size_t i = 0; i < res.t_oob_per_event_min.size(); ++i) {
    std::printf("event %zu: t_OOB = %.3f min\n", i + 1,
                res.t_oob_per_event_min[i]);
  }
  return 0;
}

int cmd_replay(const CommonArgs& a, const std::string& in_csv) {
  io::AppConfig cfg = load_or_default(a);
  const sim::Setup setup = build_setup(cfg);
  const auto records = io::read_csv(in_csv, cfg.plant.n + 1);
  const auto replayed = io::replay_estimator(records, setup);
  double worst = 0.0;
  for (std::size_t k = 0; k < records.size(); ++k) {
    worst = std::max(worst, std::abs(replayed[k].hto_est - records[k].hto_est));
  }
  std::filesystem::create_directories(a.out_dir);
  io::write_csv(a.out_dir + "/replay.csv", replayed, cfg.plant.n + 1);
  std::printf("replayed %zu rows; max |est - recorded est| = %.3g\n",
              records.size(), worst);
  return 0;
}

int cmd_tune(const CommonArgs& a) {
  io::AppConfig cfg = load_or_default(a);
  const sim::Setup setup = build_setup(cfg);
  std::printf("%s", setup.tuning.text().c_str());
  return 0;
}

int cmd_table1(const CommonArgs& a) {
  io::AppConfig cfg = load_or_default(a);
  const sim::Setup setup = build_setup(cfg);
  maybe_calibrate(cfg, setup);
  if (cfg.scenario.events.empty()) {
    throw ConfigError("table1 needs disturbance events (enable auto_calibrate "
                      "or list them in the config)");
  }

  auto one = [&](sim::Mode m, ctl::FeedbackSource fb, const char* stem) {
    sim::ScenarioConfig sc = cfg.scenario;
    sc.mode = m;
    sc.feedback_source = fb;
    const sim::RunResult res = sim::run(sc, setup);
    io::AppConfig used = cfg;
    used.scenario = sc;
    write_outputs(used, res, a.out_dir, stem);
    return res;
  };
  const auto ol = one(sim::Mode::OpenLoop, ctl::FeedbackSource::Estimate,
                      "open_loop");
  const auto ef = one(sim::Mode::ClosedLoop, ctl::FeedbackSource::Estimate,
                      "estimate_fb");
  const auto mf = one(sim::Mode::ClosedLoop, ctl::FeedbackSource::Measurement,
                      "measurement_fb");
  const sim::Table1 t = sim::table1_report(ol, ef, mf, cfg.scenario.events,
                                           cfg.scenario.duration);
  std::printf("%s", t.text().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Electrolysis gas-train simulator with impurity estimation"};
  app.require_subcommand(1);

  CommonArgs a;
  std::string in_csv;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", a.config_path, "JSON configuration file");
    sub->add_option("--out", a.out_dir, "output directory");
    sub->add_option("--seed", a.seed, "measurement-noise seed override");
  };

  CLI::App* s_sim = app.add_subcommand("simulate", "run one scenario");
  add_common(s_sim);
  CLI::App* s_rep =
      app.add_subcommand("replay", "re-run the estimator over a recorded CSV");
  add_common(s_rep);
  s_rep->add_option("--in", in_csv, "input CSV from a previous run")
      ->required();
  CLI::App* s_tune =
      app.add_subcommand("tune", "print the commissioned controller gains");
  add_common(s_tune);
  CLI::App* s_t1 = app.add_subcommand(
      "table1", "compare open-loop, estimate- and measurement-feedback runs");
  add_common(s_t1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (s_sim->parsed()) return cmd_simulate(a);
    if (s_rep->parsed()) return cmd_replay(a, in_csv);
    if (s_tune->parsed()) return cmd_tune(a);
    if (s_t1->parsed()) return cmd_table1(a);
  } catch (const htosim::ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 1;
  } catch (const htosim::DomainError& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
