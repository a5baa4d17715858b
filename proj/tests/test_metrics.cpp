#include <doctest.h>

#include "cascadesim/cases_builtin.hpp"
#include "cascadesim/metrics.hpp"

using namespace cascadesim;

TEST_CASE("path agreement on hand-built contingency sets") {
  SUBCASE("identical sets give R = 1") {
    std::vector<std::pair<std::set<int>, std::set<int>>> sets = {
        {{1, 2}, {1, 2}}, {{7}, {7}}, {{}, {}}};
    CHECK(path_agreement(sets) == doctest::Approx(1.0));
  }
  SUBCASE("the {l1,l2} vs {l2,l3} example gives 1/3") {
    CHECK(path_agreement({{{1, 2}, {2, 3}}}) == doctest::Approx(1.0 / 3.0));
  }
  SUBCASE("empty union counts as a resilient match") {
    CHECK(path_agreement({{{}, {}}}) == doctest::Approx(1.0));
    CHECK(path_agreement({{{}, {5}}}) == doctest::Approx(0.0));
  }
  SUBCASE("permutation invariance over contingencies and symmetry in (A, B)") {
    std::vector<std::pair<std::set<int>, std::set<int>>> fwd = {{{1, 2}, {2, 3}},
                                                                {{4}, {4, 5}}};
    std::vector<std::pair<std::set<int>, std::set<int>>> perm = {{{4}, {4, 5}},
                                                                 {{1, 2}, {2, 3}}};
    std::vector<std::pair<std::set<int>, std::set<int>>> swapped = {{{2, 3}, {1, 2}},
                                                                    {{4, 5}, {4}}};
    CHECK(path_agreement(fwd) == doctest::Approx(path_agreement(perm)));
    CHECK(path_agreement(fwd) == doctest::Approx(path_agreement(swapped)));
  }
  SUBCASE("empty contingency list is rejected") {
    CHECK_THROWS_AS(path_agreement({}), std::invalid_argument);
  }
}

namespace {

struct RunPair {
  CaseDefinition c;
  CascadeRun tm, pc;
};

RunPair small_cascade() {
  RunPair rp;
  rp.c = synthesize_dynamics(make_two_cluster_case(), 42);
  RunConfig cfg;
  cfg.stop.t_max = 120.0;
  cfg.outages.explicit_buses = {1, 8};
  rp.tm = run_tm_ground_truth(rp.c, cfg);
  rp.pc = run_bem_pc(rp.c, cfg);
  return rp;
}

}  // namespace

TEST_CASE("a run compared against itself is all zeros with R = 1") {
  auto rp = small_cascade();
  auto self = end_state_compare(view_of(rp.c, rp.tm), view_of(rp.c, rp.tm));
  CHECK(self.bus_status_errors == 0);
  CHECK(self.machine_status_errors == 0);
  CHECK(self.line_status_errors == 0);
  CHECK(self.max_vm_error == 0.0);
  CHECK(self.max_va_error_deg == 0.0);
  CHECK(self.max_freq_error_hz == 0.0);
  CHECK(self.r_path == doctest::Approx(1.0));
  CHECK(self.runtime_ratio == doctest::Approx(1.0));
}

TEST_CASE("dependent outages exclude the initial events") {
  auto rp = small_cascade();
  auto dep = dependent_branch_outages(view_of(rp.c, rp.tm));
  // the node outages removed several incident branches; none of those ids
  // may appear as dependent outages
  for (int id : dep) {
    for (const auto& br : rp.c.branches) {
      if (br.id != id) continue;
      CHECK(br.from_bus != 1);
      CHECK(br.to_bus != 1);
      CHECK(br.from_bus != 8);
      CHECK(br.to_bus != 8);
    }
  }
}

TEST_CASE("mismatched cases are rejected by the comparator") {
  auto rp = small_cascade();
  CaseDefinition other = synthesize_dynamics(make_nine_bus_case(), 42);
  RunConfig cfg;
  auto run9 = run_bem_plain(other, cfg);
  CHECK_THROWS_AS(end_state_compare(view_of(rp.c, rp.tm), view_of(other, run9)),
                  std::invalid_argument);
}

TEST_CASE("monte carlo summaries are deterministic and well formed") {
  CaseDefinition c = synthesize_dynamics(make_two_cluster_case(), 42);
  RunConfig cfg;
  cfg.stop.t_max = 120.0;
  McConfig mc;
  mc.n_cases = 4;
  mc.outage_count = 1;
  mc.seed = 11;

  auto s1 = monte_carlo(c, cfg, mc);
  auto s2 = monte_carlo(c, cfg, mc);
  REQUIRE(s1.cases.size() == 4);
  for (std::size_t i = 0; i < s1.cases.size(); ++i) {
    CHECK(s1.cases[i].outage_buses == s2.cases[i].outage_buses);
    CHECK(s1.cases[i].report.r_path == s2.cases[i].report.r_path);
    CHECK(s1.cases[i].tm_demand_loss_pct == s2.cases[i].tm_demand_loss_pct);
  }
  CHECK(s1.mean_r == s2.mean_r);

  // distribution curves are monotone non-increasing and anchored at x = 0
  auto monotone = [](const std::vector<double>& curve) {
    for (std::size_t i = 1; i < curve.size(); ++i)
      if (curve[i] > curve[i - 1] + 1e-12) return false;
    return true;
  };
  CHECK(monotone(s1.demand_curve_tm));
  CHECK(monotone(s1.demand_curve_bempc));
  CHECK(monotone(s1.line_curve_tm));
  CHECK(monotone(s1.line_curve_bempc));
  CHECK(s1.demand_curve_tm[0] == doctest::Approx(1.0));  // every case loses something here

  CHECK_THROWS_AS(monte_carlo(c, cfg, McConfig{.n_cases = 0}), std::invalid_argument);
}

TEST_CASE("zero-outage spec yields one resilient case") {
  CaseDefinition c = synthesize_dynamics(make_two_cluster_case(), 42);
  RunConfig cfg;
  cfg.stop.t_max = 60.0;
  McConfig mc;
  mc.n_cases = 1;
  mc.outage_count = 0;
  auto sum = monte_carlo(c, cfg, mc);
  CHECK(sum.resilient_count == 1);
  CHECK(sum.cases[0].report.r_path == doctest::Approx(1.0));
  CHECK(sum.cases[0].tm_demand_loss_pct == doctest::Approx(0.0));
}

TEST_CASE("summary serializers emit parseable output") {
  CaseDefinition c = synthesize_dynamics(make_two_cluster_case(), 42);
  RunConfig cfg;
  cfg.stop.t_max = 60.0;
  McConfig mc;
  mc.n_cases = 2;
  mc.outage_count = 1;
  mc.seed = 3;
  auto sum = monte_carlo(c, cfg, mc);
  std::string js = mc_summary_json(sum);
  CHECK(js.find("\"mean_r\"") != std::string::npos);
  CHECK(js.find("resilient_convention") != std::string::npos);
  std::string csv = mc_curves_csv(sum);
  CHECK(csv.rfind("metric,x,fraction_tm,fraction_bem_pc", 0) == 0);
  auto rep = end_state_compare(view_of(c, run_bem_plain(c, cfg)),
                               view_of(c, run_bem_plain(c, cfg)));
  CHECK(comparison_json(rep).find("\"r_path\"") != std::string::npos);
}
