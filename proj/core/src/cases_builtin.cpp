#include "cascadesim/cases_builtin.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include "cascadesim/dae.hpp"
#include "cascadesim/network.hpp"
#include "cascadesim/power_flow.hpp"

namespace cascadesim {

namespace {

BusRecord bus(int id, BusKind kind, double p_mw = 0.0, double q_mvar = 0.0) {
  BusRecord b;
  b.id = id;
  b.kind = kind;
  b.p_load_mw = p_mw;
  b.q_load_mvar = q_mvar;
  return b;
}

BranchRecord branch(int id, int from, int to, double r, double x, double b = 0.0,
                    double limit = 1e9) {
  BranchRecord br;
  br.id = id;
  br.from_bus = from;
  br.to_bus = to;
  br.r = r;
  br.x = x;
  br.b_charging = b;
  br.current_limit = limit;
  return br;
}

MachineParams machine(int bus_id, double p_set_mw, double v_set, double rating_mva) {
  MachineParams m;
  m.bus = bus_id;
  m.p_set_mw = p_set_mw;
  m.v_set = v_set;
  m.rating_mva = rating_mva;
  return m;
}

/// Solved power-flow branch currents keyed by branch id (in-service
/// elements only).
std::map<int, double> solved_flows(const CaseDefinition& c) {
  auto topo = TopologyState::all_in(c);
  auto pf = solve_power_flow(c);
  if (!pf.converged) throw std::runtime_error("builtin case power flow did not converge");
  Island whole;
  for (std::size_t i = 0; i < c.buses.size(); ++i) whole.bus_ids.push_back(c.buses[i].id);
  for (std::size_t i = 0; i < c.branches.size(); ++i)
    if (topo.branch_in[i]) whole.branch_ids.push_back(c.branches[i].id);
  for (std::size_t i = 0; i < c.machines.size(); ++i)
    whole.machine_indices.push_back(static_cast<int>(i));
  whole.has_generation = true;
  IslandModel m = build_island_model(c, topo, whole);
  Eigen::VectorXd v(2 * m.n_bus());
  for (int k = 0; k < m.n_bus(); ++k) {
    int ci = c.bus_index(m.bus_ids[k]);
    v(k) = pf.vm(ci) * std::cos(pf.va(ci));
    v(m.n_bus() + k) = pf.vm(ci) * std::sin(pf.va(ci));
  }
  Eigen::VectorXd mags = branch_current_mags(m, v);
  std::map<int, double> out;
  for (std::size_t bi = 0; bi < m.branches.size(); ++bi)
    out[m.branches[bi].id] = mags(static_cast<Eigen::Index>(bi));
  return out;
}

/// Set each branch current limit to ratio(id) times the solved base-case
/// flow, with a floor, so initial outages can overload neighbours.
void calibrate_limits(CaseDefinition& c, double floor_pu = 0.5) {
  auto flows = solved_flows(c);
  for (auto& br : c.branches) {
    double ratio = 1.5 + 0.06 * (br.id % 8);
    br.current_limit = std::max(ratio * flows.at(br.id), floor_pu);
  }
}

/// Redispatch emulating droop pickup after removing machines (by index).
CaseDefinition without_machines(const CaseDefinition& c, std::vector<int> idxs) {
  CaseDefinition out = c;
  std::sort(idxs.begin(), idxs.end());
  double lost = 0.0;
  for (auto it = idxs.rbegin(); it != idxs.rend(); ++it) {
    lost += out.machines[*it].p_set_mw;
    out.machines.erase(out.machines.begin() + *it);
  }
  for (auto& m : out.machines) m.p_set_mw += lost / static_cast<double>(out.machines.size());
  return out;
}

}  // namespace

CaseDefinition make_two_bus_case(double p_load_mw, double q_load_mvar, double x_pu) {
  CaseDefinition c;
  c.name = "two_bus";
  c.buses = {bus(1, BusKind::Slack), bus(2, BusKind::PQ, p_load_mw, q_load_mvar)};
  c.branches = {branch(1, 1, 2, 0.0, x_pu)};
  c.machines = {machine(1, 0.0, 1.0, 200.0)};
  return c;
}

CaseDefinition make_smib_case() {
  CaseDefinition c;
  c.name = "smib";
  c.buses = {bus(1, BusKind::Slack, 80.0, 15.0), bus(2, BusKind::PV)};
  c.branches = {branch(1, 1, 2, 0.004, 0.35), branch(2, 1, 2, 0.004, 0.35)};
  // Very large rating makes machine 1 a stiff source after synthesis: its
  // inertia scales up and its reactances scale down with the rating.
  c.machines = {machine(1, 0.0, 1.0, 20000.0), machine(2, 80.0, 1.02, 100.0)};
  return c;
}

CaseDefinition make_nine_bus_case() {
  CaseDefinition c;
  c.name = "nine_bus";
  c.buses = {bus(1, BusKind::Slack), bus(2, BusKind::PV),        bus(3, BusKind::PV),
             bus(4, BusKind::PQ),    bus(5, BusKind::PQ, 125, 50), bus(6, BusKind::PQ, 90, 30),
             bus(7, BusKind::PQ),    bus(8, BusKind::PQ, 100, 35), bus(9, BusKind::PQ)};
  c.branches = {branch(1, 1, 4, 0.0, 0.0576),
                branch(2, 2, 7, 0.0, 0.0625),
                branch(3, 3, 9, 0.0, 0.0586),
                branch(4, 4, 5, 0.010, 0.085, 0.176),
                branch(5, 4, 6, 0.017, 0.092, 0.158),
                branch(6, 5, 7, 0.032, 0.161, 0.306),
                branch(7, 6, 9, 0.039, 0.170, 0.358),
                branch(8, 7, 8, 0.0085, 0.072, 0.149),
                branch(9, 8, 9, 0.0119, 0.1008, 0.209)};
  c.machines = {machine(1, 71.6, 1.04, 250.0), machine(2, 163.0, 1.025, 300.0),
                machine(3, 85.0, 1.025, 270.0)};
  for (auto& br : c.branches) br.current_limit = 3.0;
  return c;
}

CaseDefinition make_two_cluster_case() {
  CaseDefinition c;
  c.name = "two_cluster";
  c.buses = {bus(1, BusKind::Slack),          bus(2, BusKind::PV),
             bus(3, BusKind::PQ, 60, 20),     bus(4, BusKind::PQ, 70, 25),
             bus(5, BusKind::PQ, 40, 10),     bus(6, BusKind::PV),
             bus(7, BusKind::PV),             bus(8, BusKind::PQ, 55, 18),
             bus(9, BusKind::PQ, 65, 22),     bus(10, BusKind::PQ, 45, 12)};
  c.branches = {branch(1, 1, 3, 0.004, 0.05, 0.02),  branch(2, 2, 4, 0.004, 0.05, 0.02),
                branch(3, 3, 4, 0.006, 0.06, 0.02),  branch(4, 3, 5, 0.006, 0.06, 0.02),
                branch(5, 4, 5, 0.006, 0.06, 0.02),  branch(6, 6, 8, 0.004, 0.05, 0.02),
                branch(7, 7, 9, 0.004, 0.05, 0.02),  branch(8, 8, 9, 0.006, 0.06, 0.02),
                branch(9, 8, 10, 0.006, 0.06, 0.02), branch(10, 9, 10, 0.006, 0.06, 0.02),
                branch(100, 5, 8, 0.008, 0.09, 0.03)};
  c.machines = {machine(1, 90.0, 1.02, 200.0), machine(2, 85.0, 1.02, 200.0),
                machine(6, 85.0, 1.01, 200.0), machine(7, 80.0, 1.01, 200.0)};
  for (auto& br : c.branches) br.current_limit = 3.0;
  return c;
}

CaseDefinition make_ring39_case() {
  CaseDefinition c;
  c.name = "ring39";
  const int n_ring = 29;
  for (int i = 1; i <= n_ring; ++i) c.buses.push_back(bus(i, BusKind::PQ, 45.0, 15.0));
  for (int i = 30; i <= 39; ++i)
    c.buses.push_back(bus(i, i == 30 ? BusKind::Slack : BusKind::PV));

  int id = 0;
  for (int i = 1; i <= n_ring; ++i) {
    int j = i == n_ring ? 1 : i + 1;
    c.branches.push_back(branch(++id, i, j, 0.005, 0.05, 0.04));
  }
  const std::pair<int, int> chords[] = {{1, 15}, {3, 18}, {5, 20}, {8, 24},
                                        {10, 25}, {13, 28}, {16, 29}};
  for (auto [a, b2] : chords) c.branches.push_back(branch(++id, a, b2, 0.008, 0.08, 0.05));
  const int gen_taps[] = {2, 5, 8, 11, 14, 17, 20, 23, 26, 29};
  for (int g = 0; g < 10; ++g)
    c.branches.push_back(branch(++id, 30 + g, gen_taps[g], 0.002, 0.04));

  for (int g = 0; g < 10; ++g) {
    double v_set = 1.0 + 0.005 * (g % 4);
    c.machines.push_back(machine(30 + g, 130.0, v_set, 200.0));
  }
  calibrate_limits(c);
  return c;
}

CaseDefinition make_ring39_hyper_case() {
  CaseDefinition c = make_ring39_case();
  c.name = "ring39_hyper";
  // Light dispatch on the units that later receive negative damping, so
  // tripping the pair is absorbable; the rest pick up the difference.
  for (std::size_t i = 0; i < c.machines.size(); ++i)
    c.machines[i].p_set_mw = i == 3 ? 60.0 : (i == 7 ? 130.0 : 144.0);
  calibrate_limits(c);

  // The special-protection study trips units 3 and 7 after a line-5
  // disturbance. Keep every corridor clear of the redistributed steady
  // flows for that whole sequence, then pin one branch whose loading rise
  // is driven by the machine trips as the single dependent overload.
  CaseDefinition pre = c;
  for (auto& br : pre.branches)
    if (br.id == 5) br.in_service = false;
  auto flows_pre = solved_flows(pre);
  CaseDefinition post = without_machines(pre, {3, 7});
  auto flows_post = solved_flows(post);
  auto flow_of = [](const std::map<int, double>& f, int id) {
    auto it = f.find(id);
    return it == f.end() ? 0.0 : it->second;
  };

  int pick = -1;
  double best_rise = 1.35;  // below this the overload is not trip-specific
  for (const auto& br : c.branches) {
    if (br.id == 5) continue;
    const double fpre = flow_of(flows_pre, br.id);
    const double fpost = flow_of(flows_post, br.id);
    if (fpost < 0.15) continue;
    const double rise = fpost / std::max(fpre, 1e-6);
    if (rise <= best_rise) continue;
    // the pinned branch must not split the grid when it finally trips
    TopologyState t2 = TopologyState::all_in(post);
    for (std::size_t i = 0; i < post.branches.size(); ++i)
      if (post.branches[i].id == br.id) t2.branch_in[i] = 0;
    if (find_islands(post, t2).islands.size() != 1) continue;
    best_rise = rise;
    pick = br.id;
  }
  if (pick < 0) throw std::runtime_error("ring39_hyper: no suitable branch to pin");

  CaseDefinition post2 = post;
  for (auto& br : post2.branches)
    if (br.id == pick) br.in_service = false;
  auto flows_post2 = solved_flows(post2);
  for (auto& br : c.branches) {
    if (br.id == pick) continue;
    double need = 1.15 * std::max({flow_of(flows_pre, br.id), flow_of(flows_post, br.id),
                                   flow_of(flows_post2, br.id)});
    br.current_limit = std::max(br.current_limit, need);
  }
  for (auto& br : c.branches)
    if (br.id == pick) br.current_limit = flow_of(flows_post, pick) / 1.22;
  return c;
}

std::string make_grid118_table_text() {
  std::ostringstream os;
  os << "function mpc = grid118\n";
  os << "mpc.baseMVA = 100;\n";
  os << "mpc.bus = [\n";
  for (int i = 1; i <= 118; ++i) {
    int type = i == 1 ? 3 : (i <= 54 ? 2 : 1);
    double pd = i <= 54 ? 0.0 : 35.0;
    double qd = i <= 54 ? 0.0 : 12.0;
    os << " " << i << " " << type << " " << pd << " " << qd
       << " 0 0 1 1.0 0.0 138 1 1.1 0.9;\n";
  }
  os << "];\n";
  os << "mpc.gen = [\n";
  for (int i = 1; i <= 54; ++i) {
    os << " " << i << " 41 0 300 -300 1.0 150 1 200 0;\n";
  }
  os << "];\n";
  os << "mpc.branch = [\n";
  for (int i = 1; i <= 118; ++i) {
    int j = i == 118 ? 1 : i + 1;
    os << " " << i << " " << j << " 0.005 0.05 0.02 120 0 0 0 0 1;\n";
  }
  for (int i = 1; i <= 68; ++i) {
    os << " " << i << " " << (i + 13) << " 0.008 0.08 0.03 100 0 0 0 0 1;\n";
  }
  os << "];\n";
  return os.str();
}

CaseDefinition make_builtin_case(const std::string& name) {
  if (name == "two_bus") return make_two_bus_case();
  if (name == "smib") return make_smib_case();
  if (name == "nine_bus") return make_nine_bus_case();
  if (name == "two_cluster") return make_two_cluster_case();
  if (name == "ring39") return make_ring39_case();
  if (name == "ring39_hyper") return make_ring39_hyper_case();
  throw std::invalid_argument("unknown builtin case: " + name);
}

}  // namespace cascadesim
