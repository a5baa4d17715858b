#include <doctest.h>

#include <cmath>

#include "cascadesim/cases_builtin.hpp"
#include "cascadesim/power_flow.hpp"

using namespace cascadesim;

TEST_CASE("flat lossless zero-load case solves to the trivial fixed point") {
  CaseDefinition c = make_two_bus_case(0.0, 0.0);
  auto sol = solve_power_flow(c);
  CHECK(sol.converged);
  CHECK(sol.vm(0) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(sol.vm(1) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(std::abs(sol.va(1)) < 1e-10);
}

// Brute-force oracle for the two-bus PV-PV case: with both voltage magnitudes
// pinned at 1, the only unknown is the angle; scan it against the load
// mismatch directly.
static double two_bus_angle_oracle(double p_load_pu, double x_pu) {
  double best_th = 0.0, best_err = 1e100;
  for (double th = -0.5; th <= 0.5; th += 1e-6) {
    double p_recv = std::sin(-th) / x_pu;  // power into bus 2 for |V|=1
    double err = std::abs(p_recv - p_load_pu);
    if (err < best_err) {
      best_err = err;
      best_th = th;
    }
  }
  return best_th;
}

TEST_CASE("two-bus case with 1 pu load matches the scanned angle") {
  CaseDefinition c = make_two_bus_case(100.0, 0.0, 0.1);
  // Hold bus 2 at 1 pu with a zero-dispatch machine so the angle carries all
  // the transfer.
  MachineParams m2;
  m2.bus = 2;
  m2.p_set_mw = 0.0;
  m2.v_set = 1.0;
  m2.rating_mva = 100.0;
  c.machines.push_back(m2);
  auto sol = solve_power_flow(c);
  CHECK(sol.converged);
  double oracle = two_bus_angle_oracle(1.0, 0.1);
  CHECK(sol.va(1) == doctest::Approx(oracle).epsilon(1e-4));
  CHECK(sol.va(1) == doctest::Approx(-std::asin(0.1)).epsilon(1e-6));
}

TEST_CASE("load above maximum transfer reports non-convergence") {
  // P_max over x=0.1 at |V|=1 is 10 pu; ask for 12.
  CaseDefinition c = make_two_bus_case(1200.0, 0.0, 0.1);
  MachineParams m2;
  m2.bus = 2;
  m2.v_set = 1.0;
  c.machines.push_back(m2);
  auto sol = solve_power_flow(c);
  CHECK_FALSE(sol.converged);
  CHECK(sol.mismatch_inf > 1e-8);
}

TEST_CASE("nine-bus case converges tightly and balances generation") {
  CaseDefinition c = make_nine_bus_case();
  auto sol = solve_power_flow(c);
  CHECK(sol.converged);
  CHECK(sol.mismatch_inf <= 1e-8);
  double gen = 0.0;
  for (double p : sol.p_gen) gen += p;
  double load = c.total_load_mw() / c.base_mva;
  CHECK(gen >= load);          // losses are positive here
  CHECK(gen <= load + 0.1);    // and small
}
