#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "test_helpers.hpp"
#include "wavesys/diagnostics.hpp"

using namespace wavesys;
using testutil::random_bandlimited_state;
using testutil::sample;

namespace {

State constant_state(const Grid& g, double c_u, double c_v) {
  State s(g);
  for (double& x : s.u.values) x = c_u;
  for (double& x : s.v.values) x = c_v;
  return s;
}

State gaussian_state(const Grid& g, double amp_u, double w_u, double amp_v, double w_v) {
  return make_state(g, gaussian_profile(amp_u, w_u), zero_profile(), gaussian_profile(amp_v, w_v),
                    zero_profile());
}

double max_drift(const Trajectory& traj, const CouplingParams& p) {
  const double e0 = energy_weighted(traj.initial(), p);
  double worst = 0.0;
  for (const State& s : traj.states)
    worst = std::max(worst, std::abs(energy_weighted(s, p) - e0) / std::abs(e0));
  return worst;
}

}  // namespace

TEST_CASE("energy_weighted: zero state and the closed-form sine example", "[diagnostics]") {
  Grid g(2, 32, 5.0);
  CouplingParams p{1.0, 1.0, 0.0, 2.0, -1};
  CHECK(energy_weighted(State(g), p) == 0.0);

  // u = sin(2 pi x0 / L), everything else zero; A = 2.  The gradient has
  // one nonzero component, (2 pi / L) cos, whose squared integral is
  // (2 pi / L)^2 L^d / 2.
  State s = make_state(g, sine_profile(1.0, 0, 1, g.box_length), zero_profile(), zero_profile(),
                       zero_profile());
  const double k = 2.0 * pi / g.box_length;
  const double expect = 0.5 * 2.0 * k * k * std::pow(g.box_length, g.dim) / 2.0;
  EnergyBreakdown eb = energy_breakdown(s, p);
  CHECK(eb.potential == 0.0);
  CHECK(eb.kinetic_v == 0.0);
  CHECK(eb.total == Catch::Approx(expect).epsilon(1e-12));
}

TEST_CASE("energy_weighted is conserved by the nonlinear flow at scheme order",
          "[diagnostics]") {
  Grid g(2, 32, 8.0);
  // widths chosen so the data (and its cubic cascade) stay inside the 2/3
  // de-aliasing band: under-resolved data pins the drift at a dt-independent
  // truncation floor and hides the scheme order
  State s = gaussian_state(g, 1.5, 0.9, -1.05, 1.08);
  CouplingParams p{1.0, 1.0, 0.0, 2.0, -1};
  IntegrateOptions opt;
  opt.override_horizon = true;
  const double T = 0.5;
  const double drift_coarse = max_drift(integrate(s, T, 0.025, p, opt), p);
  const double drift_fine = max_drift(integrate(s, T, 0.0125, p, opt), p);
  CHECK(drift_coarse <= 1e-6);
  CHECK(drift_coarse / drift_fine >= 8.0);
}

TEST_CASE("energy of the v = 0 sector is exactly conserved by the free flow",
          "[diagnostics]") {
  Grid g(2, 32, 8.0);
  // wide profiles keep the Nyquist row empty; the gradient multiplier zeroes
  // it, so energy parked there by the free rotation would read as drift
  State s = make_state(g, gaussian_profile(1.0, 1.0), gaussian_profile(-0.3, 1.2),
                       zero_profile(), zero_profile());
  CouplingParams p{1.0, 1.0, 0.0, 2.0, -1};
  const double e0 = energy_weighted(s, p);
  const double e1 = energy_weighted(propagate_linear(s, 1.3), p);
  CHECK(std::abs(e1 - e0) <= 1e-12 * std::abs(e0));
}

TEST_CASE("energy_density: zero state, integral consistency, constant state",
          "[diagnostics]") {
  CouplingParams p{1.5, 0.5, 1.0, 2.0, -1};

  SECTION("zero state gives the zero field") {
    Grid g(2, 16, 4.0);
    CHECK(max_abs(energy_density(State(g), p)) == 0.0);
  }

  SECTION("integral of the density matches energy_weighted") {
    Grid g(2, 32, 6.0);
    State s = random_bandlimited_state(g, 77, 3, 0.6);
    const Field dens = energy_density(s, p);
    double sum = 0.0;
    for (double x : dens.values) sum += x;
    const double integral = std::pow(g.spacing, g.dim) * sum;
    const double e = energy_weighted(s, p);
    CHECK(std::abs(integral - e) <= 1e-12 * std::abs(e));
  }

  SECTION("constant fields with zero velocities have constant potential density") {
    Grid g(2, 16, 4.0);
    State s = constant_state(g, 0.7, -1.3);
    const Field dens = energy_density(s, p);
    const double sigma_lm = static_cast<double>(p.sign) * p.lambda * p.mu;
    const double expect = 0.0 - sigma_lm * pow_abs(0.7, p.alpha + 2.0) *
                                    pow_abs(-1.3, p.beta + 2.0);
    for (double x : dens.values) REQUIRE(x == expect);
  }
}

TEST_CASE("cone_energy: saturation, zero state, volume scaling, truncation error",
          "[diagnostics]") {
  CouplingParams p{1.0, 1.0, 0.0, 2.0, -1};

  SECTION("a ball past the far corner saturates to the global energy") {
    Grid g(2, 16, 4.0);
    State s = random_bandlimited_state(g, 5, 3, 0.4);
    ConeSpec cone;
    cone.apex_t = 10.0;
    CHECK(cone_energy(s, cone, p) == energy_weighted(s, p));
    CHECK(cone_energy(State(g), cone, p) == 0.0);
  }

  SECTION("uniform density scales with the ball volume") {
    Grid g(2, 64, 8.0);  // h = 0.125
    State s = constant_state(g, 1.0, 1.0);
    const double rho0 = p.lambda * p.mu;  // -sigma*lambda*mu with sigma = -1
    ConeSpec big, half;
    big.apex_t = 1.6;
    half.apex_t = 0.8;
    const double e_big = cone_energy(s, big, p);
    const double e_half = cone_energy(s, half, p);
    const double r = big.apex_t;
    CHECK(std::abs(e_big / (rho0 * pi * r * r) - 1.0) <= 3.0 * g.spacing / r);
    const double ratio = e_half / e_big;
    CHECK(std::abs(ratio - 0.25) <= 0.25 * (3.0 * g.spacing / (r / 2.0)));
  }

  SECTION("a ball cut by the box boundary is rejected") {
    Grid g(2, 16, 4.0);
    State s = constant_state(g, 1.0, 1.0);
    ConeSpec cut;
    cut.apex_t = 1.95;  // radius + 2h = 2.45 > L/2, yet far corner not covered
    CHECK_THROWS_AS(cone_energy(s, cut, p), std::domain_error);
  }
}

TEST_CASE("sphere quadrature reproduces surface measure and low moments", "[diagnostics]") {
  SECTION("circle") {
    SphereQuadrature q = unit_sphere_quadrature(2, 64);
    double area = 0.0, m1 = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < q.points.size(); ++i) {
      area += q.weights[i];
      m1 += q.weights[i] * q.points[i][0];
      m2 += q.weights[i] * q.points[i][0] * q.points[i][0];
    }
    CHECK(area == Catch::Approx(2.0 * pi).epsilon(1e-14));
    CHECK(std::abs(m1) <= 1e-13);
    CHECK(m2 == Catch::Approx(pi).epsilon(1e-12));
  }

  SECTION("sphere") {
    SphereQuadrature q = unit_sphere_quadrature(3, 2048);
    double area = 0.0, mz = 0.0, mx = 0.0, mzz = 0.0;
    for (std::size_t i = 0; i < q.points.size(); ++i) {
      area += q.weights[i];
      mx += q.weights[i] * q.points[i][0];
      mz += q.weights[i] * q.points[i][2];
      mzz += q.weights[i] * q.points[i][2] * q.points[i][2];
    }
    CHECK(area == Catch::Approx(4.0 * pi).epsilon(1e-13));
    CHECK(std::abs(mz) <= 1e-11);
    CHECK(std::abs(mx) <= 0.05);
    CHECK(mzz == Catch::Approx(4.0 * pi / 3.0).epsilon(1e-4));
  }

  SECTION("three-sphere") {
    SphereQuadrature q = unit_sphere_quadrature(4, 4096);
    double area = 0.0, m0 = 0.0, m00 = 0.0;
    for (std::size_t i = 0; i < q.points.size(); ++i) {
      area += q.weights[i];
      m0 += q.weights[i] * q.points[i][0];
      m00 += q.weights[i] * q.points[i][0] * q.points[i][0];
    }
    CHECK(area == Catch::Approx(2.0 * pi * pi).epsilon(1e-10));
    CHECK(std::abs(m0) <= 1e-10);
    CHECK(m00 == Catch::Approx(2.0 * pi * pi / 4.0).epsilon(1e-6));
  }
}

TEST_CASE("multilinear interpolation: node exactness, order, periodic seam", "[diagnostics]") {
  SECTION("interpolating at a grid node returns the stored value") {
    Grid g(2, 16, 4.0);
    Field f = testutil::random_field(g, 9);
    for (std::size_t i : {std::size_t{0}, std::size_t{5}, std::size_t{200}}) {
      const std::size_t i0 = i / 16, i1 = i % 16;
      const double x[2] = {g.coordinate(i0), g.coordinate(i1)};
      CHECK(multilinear_interpolate(f, x) == f[i]);
    }
  }

  SECTION("error on a smooth field is second order, including across the seam") {
    auto err_at = [](int n) {
      Grid g(2, n, 4.0);
      auto fn = [&](std::span<const double> x) {
        return std::sin(2.0 * pi * x[0] / 4.0) * std::cos(2.0 * pi * x[1] / 4.0);
      };
      Field f = sample(g, fn);
      double worst = 0.0;
      const double probes[6][2] = {{0.13, 0.41},  {-1.02, 0.77}, {1.99, 1.99},
                                   {-1.99, 0.3},  {0.0, -1.97},  {1.57, -0.61}};
      for (const auto& pt : probes) {
        const double exact = fn(std::span<const double>(pt, 2));
        worst = std::max(worst, std::abs(multilinear_interpolate(f, pt) - exact));
      }
      return worst;
    };
    const double e32 = err_at(32), e64 = err_at(64);
    CHECK(e32 / e64 == Catch::Approx(4.0).margin(1.2));
  }
}

TEST_CASE("flux identity: zero solution gives a zero balance", "[diagnostics]") {
  Grid g(2, 16, 4.0);
  CouplingParams p{1.0, 1.0, 0.0, 2.0, -1};
  IntegrateOptions opt;
  opt.override_horizon = true;
  Trajectory traj = integrate(State(g), 0.2, 0.05, p, opt);
  ConeSpec cone;
  cone.apex_t = 1.0;
  cone.section_lo = 0.0;
  cone.section_hi = 0.2;
  FluxResult fr = flux_identity_residual(traj, cone, p);
  CHECK(fr.residual == 0.0);
  CHECK(fr.flux == 0.0);
  CHECK(fr.mask_width == 2.0 * g.spacing);  // reported with every cone diagnostic
}

TEST_CASE("flux identity residual shrinks under grid refinement", "[diagnostics]") {
  CouplingParams p{1.0, 1.0, 0.0, 2.0, -1};
  ConeSpec cone;
  cone.apex_x = {0.3, 0.0, 0.0, 0.0};
  cone.apex_t = 1.5;
  cone.section_lo = 0.2;
  cone.section_hi = 0.6;

  auto run = [&](int n, double dt, bool linear) {
    Grid g(2, n, 8.0);
    State s = linear ? make_state(g, gaussian_profile(1.5, 0.5), zero_profile(), zero_profile(),
                                  zero_profile())
                     : make_state(g, gaussian_profile(1.5, 0.5), zero_profile(),
                                  gaussian_profile(-1.0, 0.7), zero_profile());
    IntegrateOptions opt;
    opt.stride = 2;
    opt.override_horizon = true;
    return flux_identity_residual(integrate(s, 0.6, dt, p, opt), cone, p);
  };

  SECTION("coupled defocusing run") {
    FluxResult coarse = run(32, 0.05, false);
    FluxResult fine = run(64, 0.025, false);
    CHECK(coarse.mask_width == 0.5);  // 2h at n = 32, L = 8
    CHECK(fine.mask_width == 0.25);
    CHECK(coarse.flux >= 0.0);
    CHECK(fine.flux >= 0.0);
    const double ratio = std::abs(coarse.residual) / std::abs(fine.residual);
    CHECK(ratio >= 1.5);
    CHECK(ratio <= 3.0);
  }

  SECTION("decoupled linear wave obeys the same envelope") {
    FluxResult coarse = run(32, 0.05, true);
    FluxResult fine = run(64, 0.025, true);
    CHECK(coarse.flux >= 0.0);
    const double ratio = std::abs(coarse.residual) / std::abs(fine.residual);
    CHECK(ratio >= 1.5);
    CHECK(ratio <= 3.0);
  }

  SECTION("insufficient snapshot density is rejected with a stride hint") {
    Grid g(2, 32, 8.0);
    State s = make_state(g, gaussian_profile(1.5, 0.5), zero_profile(), zero_profile(),
                         zero_profile());
    IntegrateOptions opt;
    opt.stride = 16;  // spacing 0.8 >> h = 0.25
    opt.override_horizon = true;
    Trajectory sparse = integrate(s, 0.6, 0.05, p, opt);
    CHECK_THROWS_WITH(flux_identity_residual(sparse, cone, p),
                      Catch::Matchers::ContainsSubstring("stride"));
  }
}

TEST_CASE("cone_potential: zeros, volume rate, defocusing trend", "[diagnostics]") {
  CouplingParams p{1.0, 1.0, 0.0, 2.0, -1};

  SECTION("either field identically zero kills the potential") {
    Grid g(2, 16, 4.0);
    State s = make_state(g, gaussian_profile(1.0, 0.4), zero_profile(), zero_profile(),
                         zero_profile());
    ConeSpec cone;
    cone.apex_t = 1.0;
    CHECK(cone_potential(s, cone, p) == 0.0);
  }

  SECTION("uniform interaction mass scales with the ball volume") {
    Grid g(2, 64, 8.0);
    State s = constant_state(g, 1.1, 0.9);
    const double mass = pow_abs(1.1, p.alpha + 2.0) * pow_abs(0.9, p.beta + 2.0);
    std::vector<double> values;
    for (double r : {0.8, 0.4, 0.2}) {
      ConeSpec cone;
      cone.apex_t = r;
      const double val = cone_potential(s, cone, p);
      CHECK(std::abs(val / (mass * pi * r * r) - 1.0) <= 3.0 * g.spacing / r);
      values.push_back(val);
    }
    CHECK(values[1] / values[0] == Catch::Approx(0.25).margin(0.25 * 6.0 * g.spacing / 0.4));
  }

  SECTION("sections shrinking toward the vertex of a defocusing run decay") {
    Grid g(2, 32, 8.0);
    State s = make_state(g, gaussian_profile(1.0, 0.4), zero_profile(),
                         gaussian_profile(-0.7, 0.4), zero_profile());
    IntegrateOptions opt;
    opt.stride = 2;
    opt.override_horizon = true;
    Trajectory traj = integrate(s, 0.6, 0.025, p, opt);
    ConeSpec cone;
    cone.apex_t = 0.8;
    std::vector<double> vals;
    for (const State& st : traj.states)
      if (st.t > 0.15) vals.push_back(cone_potential(st, cone, p));
    REQUIRE(vals.size() >= 3);
    CHECK(vals.back() <= 0.9 * vals.front());
    for (double v : vals) CHECK(v >= 0.0);
  }
}

TEST_CASE("morawetz_interaction: zero, nonnegativity, exact sign flip, coverage",
          "[diagnostics]") {
  Grid g(2, 32, 8.0);
  CouplingParams p{1.0, 1.0, 0.0, 2.0, -1};
  IntegrateOptions opt;
  opt.override_horizon = true;

  SECTION("zero solution integrates to exactly zero") {
    Trajectory z = integrate(State(g), 0.4, 0.05, p, opt);
    CHECK(morawetz_interaction(z, 0.0, p) == 0.0);
  }

  SECTION("defocusing run with lambda*mu > 0 is nonnegative and flips sign with lambda") {
    State s = make_state(g, gaussian_profile(1.0, 0.4), zero_profile(),
                         gaussian_profile(-0.7, 0.5), zero_profile());
    Trajectory traj = integrate(s, 0.6, 0.025, p, opt);
    const double m = morawetz_interaction(traj, 0.1, p);
    CHECK(m >= 0.0);
    CHECK(m > 0.0);  // fields genuinely overlap
    CouplingParams flipped = p;
    flipped.lambda = -p.lambda;
    CHECK(morawetz_interaction(traj, 0.1, flipped) == -m);
  }

  SECTION("coverage violations are rejected") {
    State s = make_state(g, gaussian_profile(1.0, 0.4), zero_profile(),
                         gaussian_profile(-0.7, 0.5), zero_profile());
    Trajectory traj = integrate(s, 0.6, 0.025, p, opt);
    CHECK_THROWS_AS(morawetz_interaction(traj, 0.7, p), std::invalid_argument);

    IntegrateOptions windowed = opt;
    windowed.store_window = std::make_pair(0.3, 0.6);
    Trajectory late = integrate(s, 0.6, 0.025, p, windowed);
    CHECK_THROWS_AS(morawetz_interaction(late, 0.1, p), std::invalid_argument);
  }
}

TEST_CASE("diagnostics record is internally consistent and tracks drift", "[diagnostics]") {
  Grid g(2, 32, 6.0);
  State s = random_bandlimited_state(g, 123, 3, 0.5);
  CouplingParams p{2.0, 0.7, 1.0, 2.0, -1};
  const double e = energy_weighted(s, p);
  DiagnosticsRecord rec = diagnostics_record(s, p, 1.0, e);
  CHECK(rec.energy_consistent(p));
  CHECK(rec.E_w_drift_rel == 0.0);
  CHECK(rec.L2_u == lp_norm(s.u, 2.0));
  CHECK(rec.Hs_v == sobolev_norm(s.v, 1.0));
  CHECK(rec.sup_u == max_abs(s.u));
  CHECK(!rec.cone_E.has_value());

  DiagnosticsRecord shifted = diagnostics_record(s, p, 1.0, 2.0 * e);
  CHECK(shifted.E_w_drift_rel == Catch::Approx(0.5).epsilon(1e-12));

  // The multiplier symbols are named but deliberately not evaluated.
  CHECK(!morawetz_symbol_evaluated(MorawetzSymbol::Q0));
  CHECK(!morawetz_symbol_evaluated(MorawetzSymbol::P0));
}
