// Microbenchmarks for the hot paths of the simulator: the plant derivative,
// one sample tick of the stiff integrator, and one EKF predict/update cycle.
#include <benchmark/benchmark.h>

#include "htosim/estimator.hpp"
#include "htosim/numerics.hpp"
#include "htosim/plant.hpp"

namespace {

using namespace htosim;

struct Fixture {
  plant::PlantParams pp;
  plant::PlantInputs u;
  plant::PlantState ss;
  num::Vector y;

  Fixture() {
    u = plant::nominal_inputs(2000.0, 20.0, 0.05, 10.75, pp);
    ss = plant::steady_state(u, pp, plant::nominal_guess(u, 20.0, pp));
    y = plant::pack(ss);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void BM_PlantRhs(benchmark::State& state) {
  const Fixture& f = fixture();
  for (auto _ : state) {
    benchmark::DoNotOptimize(plant::plant_rhs(f.ss, f.u, f.pp));
  }
}
BENCHMARK(BM_PlantRhs);

void BM_IntegrateTick(benchmark::State& state) {
  const Fixture& f = fixture();
  const auto rhs = plant::make_rhs(f.u, f.pp);
  num::IntegratorConfig icfg;  // stiff Rosenbrock default
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        num::integrate_interval(rhs, f.y, 0.0, 0.1, icfg));
  }
}
BENCHMARK(BM_IntegrateTick);

void BM_EkfPredictUpdate(benchmark::State& state) {
  const Fixture& f = fixture();
  ekf::SimplifiedModel model;
  model.pp = f.pp;
  model.m_in = f.u.m_in;
  model.t_s = 0.1;
  const ekf::NoiseConfig cfg = ekf::NoiseConfig::defaults();
  const ekf::Inputs eu{f.u.n_out_gas, f.u.m_lye};
  ekf::EstimatorState est = ekf::initialize(f.pp, f.u, f.ss);
  const ekf::Vector4 y = ekf::measure(est.x_hat);
  for (auto _ : state) {
    est = ekf::ekf_predict(est, eu, cfg, model);
    est = ekf::ekf_update(est, y, cfg);
    benchmark::DoNotOptimize(est);
  }
}
BENCHMARK(BM_EkfPredictUpdate);

}  // namespace

BENCHMARK_MAIN();
