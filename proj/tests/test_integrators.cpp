#include <doctest.h>

#include <cmath>
#include <complex>

#include "cascadesim/integrators.hpp"
#include "support/fixtures.hpp"
#include "support/test_equation.hpp"

using namespace cascadesim;
using namespace cascadesim::testsupport;

TEST_CASE("measured amplification matches the closed forms on a two-plane grid") {
  std::vector<std::complex<double>> grid;
  for (double re : {-10.0, -2.0, -1.0, -0.5, 0.5, 1.5, 3.0, 10.0})
    for (double im : {-4.0, -1.0, 0.0, 1.0, 4.0}) grid.emplace_back(re, im);
  REQUIRE(grid.size() == 40);
  for (auto ldt : grid) {
    auto tm = measured_amplification(ldt, Method::TM);
    auto bem = measured_amplification(ldt, Method::BEM);
    CHECK(std::abs(tm - tm_af_closed_form(ldt)) <= 1e-12);
    CHECK(std::abs(bem - bem_af_closed_form(ldt)) <= 1e-12);
  }
}

TEST_CASE("TM amplification spot values") {
  CHECK(std::abs(measured_amplification({-2.0, 0.0}, Method::TM)) <= 1e-12);  // (2-2)/(2+2)
  auto pure_imag = measured_amplification({0.0, 1.7}, Method::TM);
  CHECK(std::abs(pure_imag) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("BEM amplification spot values, stiff decay and hyperstability") {
  auto half = measured_amplification({-1.0, 0.0}, Method::BEM);
  CHECK(half.real() == doctest::Approx(0.5).epsilon(1e-13));
  double prev = 1.0;
  for (double mag : {10.0, 100.0, 1000.0}) {
    double af = std::abs(measured_amplification({-mag, 0.0}, Method::BEM));
    CHECK(af < prev);
    CHECK(af == doctest::Approx(1.0 / (1.0 + mag)).epsilon(1e-12));
    prev = af;
  }
  // Unstable test equation, bounded numerical response.
  auto hyper = measured_amplification({3.0, 0.0}, Method::BEM);
  CHECK(std::abs(hyper) == doctest::Approx(0.5).epsilon(1e-13));
  CHECK(std::abs(hyper) < 1.0);
}

TEST_CASE("A-stability on the sampled left half plane") {
  for (double re : {-0.1, -1.0, -5.0, -50.0})
    for (double im : {-3.0, 0.0, 3.0}) {
      std::complex<double> ldt(re, im);
      CHECK(std::abs(measured_amplification(ldt, Method::TM)) <= 1.0 + 1e-12);
      CHECK(std::abs(measured_amplification(ldt, Method::BEM)) <= 1.0 + 1e-12);
    }
}

TEST_CASE("newton converges immediately from the exact solution") {
  auto sys = init_nine_bus();
  IntegratorConfig cfg;
  // The equilibrium is a fixed point of both discretizations.
  auto r = step_bem(sys.model, sys.state, 0.1, cfg);
  CHECK(r.converged);
  CHECK(r.iterations <= 1);
  CHECK((r.x - sys.state.x).lpNorm<Eigen::Infinity>() <= 1e-6);
}

TEST_CASE("newton solves an affine system in one iteration") {
  IntegratorConfig cfg;
  cfg.eps = 1e-12;
  Eigen::Vector2d x0(0.3, -0.2);
  TestEquationProblem p({-1.5, 0.7}, x0, 0.25, Method::BEM);
  Eigen::VectorXd v0(0);
  auto r = newton_step(p, x0, v0, cfg);
  CHECK(r.converged);
  CHECK(r.iterations == 1);
}

TEST_CASE("TM global error on the decaying exponential is second order") {
  // xdot = -x over [0,1]: single-state test problem, closed form e^{-t}.
  IntegratorConfig cfg;
  cfg.eps = 1e-13;
  Eigen::Vector2d x(1.0, 0.0);
  const double dt = 0.1;
  for (int k = 0; k < 10; ++k) {
    TestEquationProblem p({-1.0, 0.0}, x, dt, Method::TM);
    Eigen::VectorXd v0(0);
    auto r = newton_step(p, x, v0, cfg);
    REQUIRE(r.converged);
    x = r.x.head<2>();
  }
  CHECK(std::abs(x(0) - std::exp(-1.0)) <= 1e-3);
}

TEST_CASE("TM lands near a tiny-step reference with second-order error") {
  auto sys = init_nine_bus();
  SystemState st = sys.state;
  st.x(sys.model.off(1, IslandModel::kTheta)) += 0.05;
  REQUIRE(resolve_algebraic(sys.model, st.x, st.v, 1e-10, 30));

  IntegratorConfig cfg;
  cfg.eps = 1e-10;

  auto advance = [&](double dt, int steps) {
    SystemState s = st;
    for (int k = 0; k < steps; ++k) {
      auto r = step_tm(sys.model, s, dt, cfg);
      REQUIRE(r.converged);
      CHECK(r.mismatch_inf <= 1e-4);
      s.x = r.x;
      s.v = r.v;
    }
    return s;
  };

  // Reach t = 0.02 s three ways; the reference uses 100x finer steps.
  SystemState ref = advance(0.0002, 100);
  double e_coarse = (advance(0.02, 1).x - ref.x).lpNorm<Eigen::Infinity>();
  double e_half = (advance(0.01, 2).x - ref.x).lpNorm<Eigen::Infinity>();
  CHECK(e_coarse < 0.05);
  // Halving the step cuts the accumulated error about fourfold.
  CHECK(e_coarse / e_half > 2.5);
  CHECK(e_coarse / e_half < 8.0);
}

TEST_CASE("BEM step-size rule follows the first mismatch") {
  IntegratorConfig cfg;
  cfg.tau = 0.2;
  cfg.dt_min = 0.02;
  cfg.dt_max = 0.4;
  CHECK(adapt_step_bem(0.1, 0.5, cfg) == doctest::Approx(0.04));
  CHECK(adapt_step_bem(0.1, 1e9, cfg) == doctest::Approx(0.02));   // clamps to min
  CHECK(adapt_step_bem(0.1, 1e-12, cfg) == doctest::Approx(0.4));  // clamps to max
  CHECK(adapt_step_bem(0.1, 0.0, cfg) == doctest::Approx(0.4));    // exact steady state
}

TEST_CASE("TM controller caps growth and rejects large estimates") {
  IntegratorConfig cfg;
  CHECK(adapt_step_tm(1e-12, 0.1, cfg) == doctest::Approx(0.2));  // 2x cap
  CHECK(adapt_step_tm(100.0 * cfg.tm_lte_target, 0.1, cfg) ==
        doctest::Approx(0.02));                                   // 5x shrink cap
  CHECK(tm_step_rejected(10.0 * cfg.tm_lte_target, cfg));
  CHECK_FALSE(tm_step_rejected(0.5 * cfg.tm_lte_target, cfg));
  // Smooth trajectories ride at the cap.
  double dt = 0.25;
  for (int i = 0; i < 5; ++i) dt = adapt_step_tm(1e-9, dt, cfg);
  CHECK(dt == doctest::Approx(cfg.tm_dt_max));
}

TEST_CASE("RK4 comparator reproduces the classical stability polynomial") {
  auto rk4_poly = [](std::complex<double> z) {
    return 1.0 + z + z * z / 2.0 + z * z * z / 6.0 + z * z * z * z / 24.0;
  };
  auto sys = init_system(make_two_bus_case(20.0, 5.0), 17);
  (void)sys;  // the DAE-facing API is exercised in the engine tests
  // Linear-system check through the partitioned stepper is indirect; here we
  // verify the polynomial against a hand-rolled RK4 on the test equation.
  std::complex<double> z(-0.8, 0.5);
  std::complex<double> x = 1.0;
  auto f = [&](std::complex<double> y) { return z * y; };
  auto k1 = f(x), k2 = f(x + 0.5 * k1), k3 = f(x + 0.5 * k2), k4 = f(x + k3);
  std::complex<double> x1 = x + (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
  CHECK(std::abs(x1 - rk4_poly(z)) <= 1e-12);
}

TEST_CASE("partitioned RK4 tracks TM on a stable nine-bus disturbance") {
  auto sys = init_nine_bus();
  SystemState st = sys.state;
  st.x(sys.model.off(2, IslandModel::kTheta)) += 0.03;
  REQUIRE(resolve_algebraic(sys.model, st.x, st.v, 1e-10, 30));

  IntegratorConfig cfg;
  cfg.eps = 1e-8;
  SystemState rk = st, tm = st;
  for (int k = 0; k < 500; ++k) {  // 1 s at 0.002 s
    auto r = step_rk4_partitioned(sys.model, rk, 0.002, cfg);
    REQUIRE(r.converged);
    rk.x = r.x;
    rk.v = r.v;
    auto t = step_tm(sys.model, tm, 0.002, cfg);
    REQUIRE(t.converged);
    tm.x = t.x;
    tm.v = t.v;
  }
  CHECK((rk.v - tm.v).lpNorm<Eigen::Infinity>() <= 1e-3);
  CHECK((rk.x - tm.x).lpNorm<Eigen::Infinity>() <= 1e-3);
}

TEST_CASE("explicit RK4 diverges outside its stability region") {
  // lambda*dt = 3 on the test equation: hand-rolled partitioned equivalent.
  std::complex<double> z(3.0, 0.0);
  std::complex<double> x = 1.0;
  double mag_prev = 1.0;
  bool grew = false;
  for (int i = 0; i < 20; ++i) {
    auto f = [&](std::complex<double> y) { return z * y; };
    auto k1 = f(x), k2 = f(x + 0.5 * k1), k3 = f(x + 0.5 * k2), k4 = f(x + k3);
    x = x + (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
    grew = grew || std::abs(x) > mag_prev;
    mag_prev = std::abs(x);
  }
  CHECK(grew);
  CHECK(std::abs(x) > 1e3);
}
