#pragma once

#include <set>
#include <vector>

#include "cascadesim/engine.hpp"
#include "cascadesim/runio.hpp"

namespace cascadesim {

struct ComparisonReport {
  int bus_status_errors = 0;
  int machine_status_errors = 0;
  int line_status_errors = 0;
  double max_vm_error = 0.0;        // pu, over commonly energized buses
  double max_va_error_deg = 0.0;    // island-frame angles
  double max_freq_error_hz = 0.0;
  double r_path = 1.0;              // single-contingency path agreement
  double runtime_ratio = 0.0;       // reference wall / candidate wall
};

/// Branch ids tripped after the initial outages (relay and SPS line trips;
/// branches lost to the initial node removals are excluded).
std::set<int> dependent_branch_outages(const LoadedRun& run);

/// Eq-style path agreement over contingencies: mean Jaccard overlap of
/// dependent branch-outage sets; a contingency where both sets are empty
/// contributes 1 (both resilient).
double path_agreement(const std::vector<std::pair<std::set<int>, std::set<int>>>& sets);

/// Compare candidate against reference on the same case and initial outages.
ComparisonReport end_state_compare(const LoadedRun& reference, const LoadedRun& candidate);

struct McCaseResult {
  int index = 0;
  std::vector<int> outage_buses;
  ComparisonReport report;            // TM (reference) vs BEM-PC
  double tm_wall = 0.0, bempc_wall = 0.0, rk4_wall = -1.0;
  double tm_demand_loss_pct = 0.0, bempc_demand_loss_pct = 0.0;
  int tm_lines_out = 0, bempc_lines_out = 0;
  double sim_time = 0.0;              // TM cascade span
  double bempc_a_share = 0.0;         // subprocess (a) share of BEM-PC wall
  bool resilient = false;             // no dependent events in TM
  bool collapsed = false;
  bool corrected = false;             // BEM-PC needed more than one round
  int pc_rounds = 1;
};

struct MonteCarloSummary {
  std::vector<McCaseResult> cases;
  double mean_r = 1.0, median_r = 1.0, min_r = 1.0;
  double median_runtime_ratio = 0.0;
  int resilient_count = 0, collapsed_count = 0, corrected_count = 0;
  // fraction of cases with demand loss >= x (x = 0..100 %), per method
  std::vector<double> demand_curve_tm, demand_curve_bempc;
  // fraction of cases with line outages >= x (x = 0..branch count)
  std::vector<double> line_curve_tm, line_curve_bempc;
};

struct McConfig {
  int n_cases = 100;
  int outage_count = 2;
  unsigned long long seed = 0;
  bool run_rk4 = false;
  double rk4_min_sim_time = 30.0;
};

/// Deterministic Monte-Carlo study: per case, sample node outages, run TM
/// and BEM-PC (optionally RK4), compare, and aggregate distribution curves.
MonteCarloSummary monte_carlo(const CaseDefinition& c, const RunConfig& base,
                              const McConfig& mc);

std::string mc_summary_json(const MonteCarloSummary& s);
std::string mc_curves_csv(const MonteCarloSummary& s);
std::string comparison_json(const ComparisonReport& r);

}  // namespace cascadesim
