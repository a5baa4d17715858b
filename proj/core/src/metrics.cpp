#include "cascadesim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace cascadesim {

using nlohmann::json;

std::set<int> dependent_branch_outages(const LoadedRun& run) {
  // The engine never emits line_trip events for branches lost to the
  // initial node removals, so every explicit trip is a dependent outage.
  std::set<int> out;
  for (const auto& e : run.events)
    if (e.kind == EventKind::LineTrip || e.kind == EventKind::SpsLineTrip)
      for (int id : e.targets) out.insert(id);
  return out;
}

double path_agreement(const std::vector<std::pair<std::set<int>, std::set<int>>>& sets) {
  if (sets.empty()) throw std::invalid_argument("path_agreement: empty contingency list");
  double sum = 0.0;
  for (const auto& [a, b] : sets) {
    std::set<int> uni = a;
    uni.insert(b.begin(), b.end());
    if (uni.empty()) {
      sum += 1.0;  // both resilient
      continue;
    }
    int inter = 0;
    for (int x : a)
      if (b.count(x)) ++inter;
    sum += static_cast<double>(inter) / static_cast<double>(uni.size());
  }
  return sum / static_cast<double>(sets.size());
}

namespace {

double wrap_angle_deg(double d) {
  while (d > 180.0) d -= 360.0;
  while (d < -180.0) d += 360.0;
  return std::abs(d);
}

}  // namespace

ComparisonReport end_state_compare(const LoadedRun& reference, const LoadedRun& candidate) {
  const auto& ea = reference.end_state;
  const auto& eb = candidate.end_state;
  if (ea.buses.size() != eb.buses.size() ||
      ea.machine_connected.size() != eb.machine_connected.size() ||
      ea.branch_in.size() != eb.branch_in.size())
    throw std::invalid_argument("end_state_compare: runs are not on the same case");

  ComparisonReport rep;
  for (std::size_t i = 0; i < ea.buses.size(); ++i) {
    const auto& a = ea.buses[i];
    const auto& b = eb.buses[i];
    if (a.id != b.id) throw std::invalid_argument("end_state_compare: bus order differs");
    if (a.energized != b.energized) ++rep.bus_status_errors;
    if (a.energized && b.energized) {
      rep.max_vm_error = std::max(rep.max_vm_error, std::abs(a.vm - b.vm));
      rep.max_va_error_deg =
          std::max(rep.max_va_error_deg, wrap_angle_deg(a.va_deg - b.va_deg));
      rep.max_freq_error_hz = std::max(rep.max_freq_error_hz, std::abs(a.freq_hz - b.freq_hz));
    }
  }
  for (std::size_t i = 0; i < ea.machine_connected.size(); ++i)
    if (ea.machine_connected[i] != eb.machine_connected[i]) ++rep.machine_status_errors;
  for (std::size_t i = 0; i < ea.branch_in.size(); ++i)
    if (ea.branch_in[i] != eb.branch_in[i]) ++rep.line_status_errors;

  rep.r_path = path_agreement(
      {{dependent_branch_outages(reference), dependent_branch_outages(candidate)}});
  rep.runtime_ratio =
      candidate.wall_seconds > 0.0 ? reference.wall_seconds / candidate.wall_seconds : 0.0;
  return rep;
}

MonteCarloSummary monte_carlo(const CaseDefinition& c, const RunConfig& base,
                              const McConfig& mc) {
  if (mc.n_cases < 1) throw std::invalid_argument("monte_carlo: n_cases must be >= 1");
  MonteCarloSummary sum;

  for (int k = 0; k < mc.n_cases; ++k) {
    RunConfig cfg = base;
    cfg.outages.explicit_buses.clear();
    cfg.outages.random_count = mc.outage_count;
    cfg.outages.seed = mc.seed * 1000003ULL + static_cast<unsigned long long>(k);

    McCaseResult res;
    res.index = k;
    res.outage_buses = resolve_outage_buses(c, cfg.outages);

    CascadeRun tm = run_tm_ground_truth(c, cfg);
    CascadeRun pc = run_bem_pc(c, cfg);
    LoadedRun tv = view_of(c, tm);
    LoadedRun pv = view_of(c, pc);
    res.report = end_state_compare(tv, pv);
    res.tm_wall = tm.wall_seconds;
    res.bempc_wall = pc.wall_seconds;
    res.tm_demand_loss_pct =
        100.0 * (1.0 - tm.end_state.demand_served_mw / tm.end_state.demand_total_mw);
    res.bempc_demand_loss_pct =
        100.0 * (1.0 - pc.end_state.demand_served_mw / pc.end_state.demand_total_mw);
    auto lines_out = [](const CascadeRun& r) {
      int n = 0;
      for (char in : r.end_state.branch_in)
        if (!in) ++n;
      return n;
    };
    res.tm_lines_out = lines_out(tm);
    res.bempc_lines_out = lines_out(pc);
    res.sim_time = tm.sim_end_time;
    res.bempc_a_share = pc.wall_seconds > 0.0 ? pc.breakdown.a / pc.wall_seconds : 0.0;
    res.resilient = dependent_branch_outages(tv).empty() &&
                    std::none_of(tv.events.begin(), tv.events.end(), [](const Event& e) {
                      return e.kind != EventKind::InitialNodeOutage &&
                             e.kind != EventKind::IslandSplit;
                    });
    res.collapsed = tm.termination != Termination::Settled;
    res.corrected = pc.pc_rounds > 1;
    res.pc_rounds = pc.pc_rounds;
    if (mc.run_rk4 && tm.sim_end_time >= mc.rk4_min_sim_time) {
      CascadeRun rk = run_rk4_partitioned(c, cfg);
      res.rk4_wall = rk.wall_seconds;
    }
    sum.cases.push_back(std::move(res));
  }

  // Aggregates
  std::vector<double> rs, ratios;
  for (const auto& cs : sum.cases) {
    rs.push_back(cs.report.r_path);
    if (cs.bempc_wall > 0.0) ratios.push_back(cs.tm_wall / cs.bempc_wall);
    sum.resilient_count += cs.resilient ? 1 : 0;
    sum.collapsed_count += cs.collapsed ? 1 : 0;
    sum.corrected_count += cs.corrected ? 1 : 0;
  }
  auto median = [](std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  sum.mean_r = std::accumulate(rs.begin(), rs.end(), 0.0) / static_cast<double>(rs.size());
  sum.median_r = median(rs);
  sum.min_r = *std::min_element(rs.begin(), rs.end());
  sum.median_runtime_ratio = median(ratios);

  const int nb = static_cast<int>(c.branches.size());
  sum.demand_curve_tm.assign(101, 0.0);
  sum.demand_curve_bempc.assign(101, 0.0);
  sum.line_curve_tm.assign(nb + 1, 0.0);
  sum.line_curve_bempc.assign(nb + 1, 0.0);
  const double n = static_cast<double>(sum.cases.size());
  for (const auto& cs : sum.cases) {
    for (int x = 0; x <= 100; ++x) {
      if (cs.tm_demand_loss_pct >= x) sum.demand_curve_tm[x] += 1.0 / n;
      if (cs.bempc_demand_loss_pct >= x) sum.demand_curve_bempc[x] += 1.0 / n;
    }
    for (int x = 0; x <= nb; ++x) {
      if (cs.tm_lines_out >= x) sum.line_curve_tm[x] += 1.0 / n;
      if (cs.bempc_lines_out >= x) sum.line_curve_bempc[x] += 1.0 / n;
    }
  }
  return sum;
}

std::string comparison_json(const ComparisonReport& r) {
  json j;
  j["bus_status_errors"] = r.bus_status_errors;
  j["machine_status_errors"] = r.machine_status_errors;
  j["line_status_errors"] = r.line_status_errors;
  j["max_vm_error_pu"] = r.max_vm_error;
  j["max_va_error_deg"] = r.max_va_error_deg;
  j["max_freq_error_hz"] = r.max_freq_error_hz;
  j["r_path"] = r.r_path;
  j["runtime_ratio"] = r.runtime_ratio;
  return j.dump(2);
}

std::string mc_summary_json(const MonteCarloSummary& s) {
  json j;
  j["n_cases"] = s.cases.size();
  j["mean_r"] = s.mean_r;
  j["median_r"] = s.median_r;
  j["min_r"] = s.min_r;
  j["median_runtime_ratio"] = s.median_runtime_ratio;
  j["resilient_count"] = s.resilient_count;
  j["collapsed_count"] = s.collapsed_count;
  j["corrected_count"] = s.corrected_count;
  j["resilient_convention"] =
      "resilient cases enter R with empty dependent sets on both sides (term = 1)";
  j["cases"] = json::array();
  for (const auto& cs : s.cases) {
    json jc;
    jc["index"] = cs.index;
    jc["outage_buses"] = cs.outage_buses;
    jc["r"] = cs.report.r_path;
    jc["bus_status_errors"] = cs.report.bus_status_errors;
    jc["machine_status_errors"] = cs.report.machine_status_errors;
    jc["line_status_errors"] = cs.report.line_status_errors;
    jc["max_vm_error_pu"] = cs.report.max_vm_error;
    jc["max_freq_error_hz"] = cs.report.max_freq_error_hz;
    jc["tm_wall_s"] = cs.tm_wall;
    jc["bempc_wall_s"] = cs.bempc_wall;
    if (cs.rk4_wall >= 0.0) jc["rk4_wall_s"] = cs.rk4_wall;
    jc["tm_demand_loss_pct"] = cs.tm_demand_loss_pct;
    jc["bempc_demand_loss_pct"] = cs.bempc_demand_loss_pct;
    jc["tm_lines_out"] = cs.tm_lines_out;
    jc["bempc_lines_out"] = cs.bempc_lines_out;
    jc["sim_time_s"] = cs.sim_time;
    jc["bempc_a_share"] = cs.bempc_a_share;
    jc["resilient"] = cs.resilient;
    jc["collapsed"] = cs.collapsed;
    jc["pc_rounds"] = cs.pc_rounds;
    j["cases"].push_back(jc);
  }
  return j.dump(2);
}

std::string mc_curves_csv(const MonteCarloSummary& s) {
  std::ostringstream os;
  os << "metric,x,fraction_tm,fraction_bem_pc\n";
  for (std::size_t x = 0; x < s.demand_curve_tm.size(); ++x)
    os << "demand_loss_pct," << x << "," << s.demand_curve_tm[x] << ","
       << s.demand_curve_bempc[x] << "\n";
  for (std::size_t x = 0; x < s.line_curve_tm.size(); ++x)
    os << "line_outages," << x << "," << s.line_curve_tm[x] << "," << s.line_curve_bempc[x]
       << "\n";
  return os.str();
}

}  // namespace cascadesim
