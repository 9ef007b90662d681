#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "htosim/plant.hpp"

using namespace htosim;
using plant::kBar;

TEST_CASE("production rate: nominal current density") {
  plant::PlantParams pp;
  // 2000 * 598 / (2 * 96485)
  CHECK(plant::production_rate(2000.0, pp.h2, pp) ==
        doctest::Approx(6.197).epsilon(1e-3));
  CHECK(plant::production_rate(2000.0, pp.o2, pp) ==
        doctest::Approx(3.099).epsilon(1e-3));
  CHECK(plant::production_rate(0.0, pp.h2, pp) == 0.0);
  CHECK_THROWS_AS(plant::production_rate(-1.0, pp.h2, pp), DomainError);
}

TEST_CASE("diffusion rate: H2 at 20 bar") {
  plant::PlantParams pp;
  // 1290 * 20 * 8.84e-5 * 5.59e-9 * 598 / 0.005
  CHECK(plant::diffusion_rate(20.0, pp.h2, pp) ==
        doctest::Approx(1.525e-3).epsilon(1e-3));
  CHECK(plant::diffusion_rate(0.0, pp.h2, pp) == 0.0);
  CHECK(plant::diffusion_rate(20.0, pp.o2, pp) == 0.0);  // D = 0 for O2
  CHECK_THROWS_AS(plant::diffusion_rate(-1.0, pp.h2, pp), DomainError);
}

TEST_CASE("convection: proportional to dp with 0.01 bar reference") {
  const double nd = 1.52e-3;
  CHECK(plant::convection_rate(nd, 0.01) == doctest::Approx(nd));
  CHECK(plant::convection_rate(nd, 0.05) == doctest::Approx(5.0 * nd));
  CHECK(plant::convection_rate(nd, 0.0) == 0.0);
  CHECK(plant::convection_rate(nd, -0.01) == doctest::Approx(-nd));
  CHECK_THROWS_AS(plant::convection_rate(-1.0, 0.01), DomainError);
}

TEST_CASE("Hagen-Poiseuille: coefficient against a hand evaluation") {
  // Hand value for a 0.1 m pipe radius: n pi r^4 / (16 eta R T l_p) times
  // (2.0001e6)^2 - (2e6)^2; the difference form (p_i - p_n)(p_i + p_n) must
  // agree with the textbook p_i^2 - p_n^2.
  plant::PlantParams pp;
  pp.r = 0.1;
  const double coeff = 5.0 * M_PI * 1e-4 / (16.0 * 1.1e-5 * 8.314 * 353.15);
  const double expect = coeff * (2.0001e6 * 2.0001e6 - 2e6 * 2e6);
  const double q = plant::hagen_poiseuille_flow(20.001, 20.0, pp);
  CHECK(q == doctest::Approx(expect).epsilon(1e-9));
  CHECK(q == doctest::Approx(1.216e6).epsilon(5e-3));
  // Antisymmetry and sign.
  CHECK(plant::hagen_poiseuille_flow(20.0, 20.001, pp) ==
        doctest::Approx(-q));
  CHECK(plant::hagen_poiseuille_flow(20.0, 20.0, pp) == 0.0);
  CHECK_THROWS_AS(plant::hagen_poiseuille_flow(0.0, 20.0, pp), DomainError);
}

TEST_CASE("dissolved O2 sink") {
  plant::PlantParams pp;
  CHECK(plant::dissolved_o2_sink(10.0, 20.0, pp) ==
        doctest::Approx(1.626e-2).epsilon(1e-3));
  CHECK(plant::dissolved_o2_sink(0.0, 20.0, pp) == 0.0);
  CHECK_THROWS_AS(plant::dissolved_o2_sink(-1.0, 20.0, pp), DomainError);
}

TEST_CASE("gas volume: half-full separator") {
  plant::PlantParams pp;  // V_t = 2, A = 2
  const plant::GasVolume gv = plant::gas_volume(0.5, pp);
  CHECK(gv.V == doctest::Approx(1.0));
  CHECK(gv.dV_dl == doctest::Approx(-2.0));
  CHECK_THROWS_AS(plant::gas_volume(0.0, pp), DomainError);
  CHECK_THROWS_AS(plant::gas_volume(1.0, pp), DomainError);  // lA = V_t
}

TEST_CASE("stack effluent: zero current leaves only diffusion") {
  plant::PlantParams pp;
  plant::PlantInputs u;
  u.I = 0.0;
  u.dp = 0.0;
  const plant::Effluent eff = plant::stack_effluent(u, 20.0, pp);
  CHECK(eff.n_o2 == 0.0);
  CHECK(eff.n_h2 == doctest::Approx(plant::diffusion_rate(20.0, pp.h2, pp)));
}

TEST_CASE("stack effluent: tenfold current reduction raises feed HTO tenfold") {
  plant::PlantParams pp;
  plant::PlantInputs u;
  u.I = 2000.0;
  u.dp = 0.05;
  const plant::Effluent hi = plant::stack_effluent(u, 20.0, pp);
  u.I = 200.0;
  const plant::Effluent lo = plant::stack_effluent(u, 20.0, pp);
  CHECK(lo.n_h2 / lo.n_o2 == doctest::Approx(10.0 * hi.n_h2 / hi.n_o2));
}

TEST_CASE("hto ratio") {
  CHECK(plant::hto(0.02, 0.98) == doctest::Approx(0.0204081633));
  CHECK_THROWS_AS(plant::hto(0.02, 0.0), SingularError);
}

TEST_CASE("plant_rhs: composition derivatives are exactly antisymmetric") {
  plant::PlantParams pp;
  const plant::PlantInputs u = plant::nominal_inputs(2000, 20, 0.05, 10.75, pp);
  const plant::PlantState s = plant::nominal_guess(u, 20.0, pp);
  const plant::PlantState d = plant::plant_rhs(s, u, pp);
  for (int i = 0; i <= pp.n; ++i) {
    CHECK(d.x_o2[i] == -d.x_h2[i]);  // bitwise, by construction
  }
}

TEST_CASE("pack/unpack round trip") {
  plant::PlantParams pp;
  const plant::PlantInputs u = plant::nominal_inputs(2000, 20, 0.05, 10.75, pp);
  const plant::PlantState s = plant::nominal_guess(u, 20.0, pp);
  const plant::PlantState s2 = plant::unpack(plant::pack(s), pp);
  CHECK((s2.p - s.p).cwiseAbs().maxCoeff() == 0.0);
  CHECK((s2.x_h2 - s.x_h2).cwiseAbs().maxCoeff() == 0.0);
  CHECK(s2.l == s.l);
  CHECK_THROWS_AS(plant::unpack(Eigen::VectorXd::Ones(5), pp), DomainError);
}

TEST_CASE("state validation rejects unphysical states") {
  plant::PlantParams pp;
  const plant::PlantInputs u = plant::nominal_inputs(2000, 20, 0.05, 10.75, pp);
  plant::PlantState s = plant::nominal_guess(u, 20.0, pp);
  CHECK_NOTHROW(s.validate(pp));
  plant::PlantState bad = s;
  bad.p[2] = -1.0;
  CHECK_THROWS_AS(bad.validate(pp), DomainError);
  bad = s;
  bad.x_h2[0] = 0.4;  // sum no longer 1
  CHECK_THROWS_AS(bad.validate(pp), DomainError);
  bad = s;
  bad.l = 2.0;  // above the vessel
  CHECK_THROWS_AS(bad.validate(pp), DomainError);
}

TEST_CASE("steady state: converges and is a pass-through in composition") {
  plant::PlantParams pp;
  const plant::PlantInputs u = plant::nominal_inputs(2000, 20, 0.05, 10.75, pp);
  const plant::PlantState ss =
      plant::steady_state(u, pp, plant::nominal_guess(u, 20.0, pp));
  CHECK(plant::steady_residual(ss, u, pp) < 1e-9);

  // Feed composition appears unchanged along the pipe; the separator ratio
  // differs only through the dissolved-O2 correction.
  const plant::Effluent eff = plant::stack_effluent(u, ss.p[0] / kBar, pp);
  const double feed_hto = eff.n_h2 / eff.n_o2;
  for (int i = 0; i < pp.n; ++i) {
    CHECK(plant::hto(ss.x_h2[i], ss.x_o2[i]) ==
          doctest::Approx(feed_hto).epsilon(1e-6));
  }
  const double nd = plant::dissolved_o2_sink(u.m_lye, ss.p[pp.n] / kBar, pp);
  CHECK(plant::hto(ss.x_h2[pp.n], ss.x_o2[pp.n]) ==
        doctest::Approx(eff.n_h2 / (eff.n_o2 - nd)).epsilon(1e-6));

  // Separator pressure sits at the commanded 20 bar (by input construction).
  CHECK(ss.p[pp.n] / kBar == doctest::Approx(20.0).epsilon(1e-4));
  // Pipe pressure drop at these defaults is far below 1 mbar per segment.
  CHECK(ss.p[0] - ss.p[pp.n] < 100.0);

  // The derivative at the steady state is numerically zero.
  const plant::PlantState d = plant::plant_rhs(ss, u, pp);
  CHECK(std::abs(d.l) < 1e-12);
  for (int i = 0; i <= pp.n; ++i) {
    CHECK(std::abs(d.x_h2[i]) < 1e-9);
  }
}

TEST_CASE("steady state: level imbalance is rejected") {
  plant::PlantParams pp;
  plant::PlantInputs u = plant::nominal_inputs(2000, 20, 0.05, 10.75, pp);
  u.m_in = u.m_lye + 1.0;
  CHECK_THROWS_AS(
      plant::steady_state(u, pp, plant::nominal_guess(u, 20.0, pp)),
      DomainError);
}

TEST_CASE("short integration holds the composition-sum invariant") {
  plant::PlantParams pp;
  const plant::PlantInputs u = plant::nominal_inputs(2000, 20, 0.05, 10.75, pp);
  const plant::PlantState ss =
      plant::steady_state(u, pp, plant::nominal_guess(u, 20.0, pp));
  num::IntegratorConfig icfg;
  const num::Trajectory tr =
      num::integrate(plant::make_rhs(u, pp), plant::pack(ss), 0.0, 10.0, 0.1,
                     icfg);
  for (const auto& y : tr.y) {
    const plant::PlantState s = plant::unpack(y, pp);
    for (int i = 0; i <= pp.n; ++i) {
      CHECK(std::abs(s.x_h2[i] + s.x_o2[i] - 1.0) < 1e-9);
    }
  }
}
