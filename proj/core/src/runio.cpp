#include "cascadesim/runio.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cascadesim/cases_builtin.hpp"

namespace cascadesim {

using nlohmann::json;

namespace {

EventKind event_kind_from_name(const std::string& s) {
  if (s == "initial_node_outage") return EventKind::InitialNodeOutage;
  if (s == "initial_line_outage") return EventKind::InitialLineOutage;
  if (s == "line_trip") return EventKind::LineTrip;
  if (s == "uvls_shed") return EventKind::UvlsShed;
  if (s == "machine_trip_oos") return EventKind::MachineTripOos;
  if (s == "sps_trip") return EventKind::SpsTrip;
  if (s == "sps_line_trip") return EventKind::SpsLineTrip;
  if (s == "island_split") return EventKind::IslandSplit;
  throw std::invalid_argument("unknown event kind: " + s);
}

void integ_from_json(const json& j, IntegratorConfig& g) {
  g.dt_min = j.value("dt_min", g.dt_min);
  g.dt_max = j.value("dt_max", g.dt_max);
  g.eps = j.value("eps", g.eps);
  g.max_newton_iters = j.value("max_newton_iters", g.max_newton_iters);
  g.post_event_steps = j.value("k", g.post_event_steps);
  g.iter_threshold = j.value("r", g.iter_threshold);
  g.tau = j.value("tau", g.tau);
  g.dt_event = j.value("dt_event", g.dt_event);
  g.tm_dt_min = j.value("tm_dt_min", g.tm_dt_min);
  g.tm_dt_max = j.value("tm_dt_max", g.tm_dt_max);
  g.tm_lte_target = j.value("tm_lte_target", g.tm_lte_target);
  g.rk4_dt = j.value("rk4_dt", g.rk4_dt);
}

void relays_from_json_cfg(const json& j, RelayConfig& r) {
  r.t_w_oc = j.value("t_w_oc", r.t_w_oc);
  r.t_w_uvls = j.value("t_w_uvls", r.t_w_uvls);
  r.t_tp_uvls = j.value("t_tp_uvls", r.t_tp_uvls);
  r.lambda_shed = j.value("lambda_shed", r.lambda_shed);
  r.v_th = j.value("v_th", r.v_th);
  r.k_shed_max = j.value("k_shed_max", r.k_shed_max);
  r.oc_freeze_after_event = j.value("oc_freeze_after_event", r.oc_freeze_after_event);
  r.out_of_step_angle_th = j.value("out_of_step_angle_th", r.out_of_step_angle_th);
  r.oos_monotone_window = j.value("oos_monotone_window", r.oos_monotone_window);
  r.sps_delay = j.value("sps_delay", r.sps_delay);
  r.sps_machine_count = j.value("sps_machine_count", r.sps_machine_count);
  if (j.contains("sps_line_branch") && !j["sps_line_branch"].is_null())
    r.sps_line_branch = j["sps_line_branch"].get<int>();
  r.measurement_dt = j.value("measurement_dt", r.measurement_dt);
}

void pc_from_json(const json& j, PcConfig& p) {
  p.round_cap = j.value("round_cap", p.round_cap);
  p.settle_window = j.value("settle_window", p.settle_window);
  p.settle_speed_tol = j.value("settle_speed_tol", p.settle_speed_tol);
  p.settle_time_cap = j.value("settle_time_cap", p.settle_time_cap);
  p.sigma_th = j.value("sigma_th", p.sigma_th);
  p.omega_th = j.value("omega_th", p.omega_th);
  p.use_worker_pool = j.value("use_worker_pool", p.use_worker_pool);
  p.pool_threads = j.value("pool_threads", p.pool_threads);
}

}  // namespace

RunFile parse_run_file(const std::string& text) {
  json j = json::parse(text);
  RunFile rf;
  rf.case_path = j.at("case").get<std::string>();
  rf.method = run_method_from_name(j.value("method", "bem_pc"));
  if (j.contains("integrator")) integ_from_json(j["integrator"], rf.config.integ);
  if (j.contains("relays")) {
    relays_from_json_cfg(j["relays"], rf.config.relays);
    rf.config.use_case_relays = false;
  }
  if (j.contains("pc")) pc_from_json(j["pc"], rf.config.pc);
  if (j.contains("stop")) {
    rf.config.stop.window = j["stop"].value("window", rf.config.stop.window);
    rf.config.stop.speed_tol = j["stop"].value("speed_tol", rf.config.stop.speed_tol);
    rf.config.stop.t_max = j["stop"].value("t_max", rf.config.stop.t_max);
    rf.config.stop.relay_horizon =
        j["stop"].value("relay_horizon", rf.config.stop.relay_horizon);
  }
  rf.config.t_outage = j.value("t_outage", rf.config.t_outage);
  if (j.contains("outages")) {
    const auto& jo = j["outages"];
    if (jo.contains("buses"))
      rf.config.outages.explicit_buses = jo["buses"].get<std::vector<int>>();
    if (jo.contains("branches"))
      rf.config.outages.explicit_branches = jo["branches"].get<std::vector<int>>();
    rf.config.outages.random_count = jo.value("random_count", 0);
    rf.config.outages.seed = jo.value("seed", 0ULL);
  }
  if (j.contains("synthesis")) {
    rf.synth_seed = j["synthesis"].value("seed", 1ULL);
    if (j["synthesis"].contains("damping_overrides"))
      for (const auto& [k, v] : j["synthesis"]["damping_overrides"].items())
        rf.damping_overrides[std::stoi(k)] = v.get<double>();
  }
  rf.output_dir = j.value("output_dir", ".");
  if (j.contains("mc")) {
    const auto& jm = j["mc"];
    rf.mc.n_cases = jm.value("n_cases", 0);
    rf.mc.outage_count = jm.value("outage_count", 2);
    rf.mc.seed = jm.value("seed", 0ULL);
    rf.mc.run_rk4 = jm.value("run_rk4", false);
    rf.mc.rk4_min_sim_time = jm.value("rk4_min_sim_time", 30.0);
  }
  return rf;
}

CaseDefinition load_case_for_run(const RunFile& rf) {
  CaseDefinition c;
  if (rf.case_path.rfind("builtin:", 0) == 0) {
    c = make_builtin_case(rf.case_path.substr(8));
  } else {
    std::ifstream in(rf.case_path);
    if (!in) throw std::runtime_error("cannot read case file: " + rf.case_path);
    std::stringstream ss;
    ss << in.rdbuf();
    c = parse_case(ss.str());
  }
  bool needs_synth = rf.synth_seed.has_value();
  for (const auto& m : c.machines) needs_synth = needs_synth || !m.has_dynamics;
  if (needs_synth)
    c = synthesize_dynamics(c, rf.synth_seed.value_or(1ULL), rf.damping_overrides);
  return c;
}

std::string event_log_jsonl(const CascadeRun& run) {
  std::ostringstream os;
  for (const auto& e : run.events) {
    json j;
    j["t"] = e.t;
    j["tier"] = e.tier;
    j["kind"] = event_kind_name(e.kind);
    j["targets"] = e.targets;
    j["island"] = e.island;
    os << j.dump() << "\n";
  }
  return os.str();
}

std::string end_state_json(const CaseDefinition& c, const CascadeRun& run) {
  json j;
  j["case"] = c.name;
  j["method"] = run_method_name(run.method);
  j["termination"] = termination_name(run.termination);
  j["sim_end_time"] = run.sim_end_time;
  j["wall_seconds"] = run.wall_seconds;
  j["pc_rounds"] = run.pc_rounds;
  j["pc_round_cap_hit"] = run.pc_round_cap_hit;
  j["demand_served_mw"] = run.end_state.demand_served_mw;
  j["demand_total_mw"] = run.end_state.demand_total_mw;
  j["breakdown"] = {{"a", run.breakdown.a},
                    {"b1", run.breakdown.b1},
                    {"b2", run.breakdown.b2},
                    {"b3", run.breakdown.b3}};
  j["buses"] = json::array();
  for (const auto& b : run.end_state.buses) {
    j["buses"].push_back({{"id", b.id},
                          {"energized", b.energized},
                          {"vm", b.vm},
                          {"va_deg", b.va_deg},
                          {"freq_hz", b.freq_hz}});
  }
  j["machines"] = json::array();
  for (std::size_t i = 0; i < run.end_state.machine_connected.size(); ++i)
    j["machines"].push_back(
        {{"index", i}, {"connected", run.end_state.machine_connected[i] != 0}});
  j["branches"] = json::array();
  for (std::size_t i = 0; i < run.end_state.branch_in.size(); ++i)
    j["branches"].push_back(
        {{"id", c.branches[i].id}, {"in", run.end_state.branch_in[i] != 0}});
  return j.dump(2);
}

std::string tier_timeline_csv(const CaseDefinition& c, const CascadeRun& run) {
  std::ostringstream os;
  os << "t,cumulative_line_outages,demand_loss_mw\n";
  TopologyState topo = TopologyState::all_in(c);
  auto count_lines_out = [&] {
    int n = 0;
    for (std::size_t i = 0; i < topo.branch_in.size(); ++i)
      if (c.branches[i].in_service && !topo.branch_in[i]) ++n;
    return n;
  };
  auto demand_loss = [&] {
    auto part = find_islands(c, topo);
    double served = 0.0;
    for (const auto& isl : part.islands) {
      if (!isl.has_generation) continue;
      for (int b : isl.bus_ids) {
        int bi = c.bus_index(b);
        served += c.buses[bi].p_load_mw * topo.shed_remaining[bi];
      }
    }
    return c.total_load_mw() - served;
  };
  os << "0," << count_lines_out() << "," << demand_loss() << "\n";
  for (std::size_t i = 0; i < run.events.size(); ++i) {
    const auto& e = run.events[i];
    if (e.kind == EventKind::UvlsShed)
      apply_shed_to_topology(c, topo, e, run.lambda_shed_used);
    else
      apply_event_to_topology(c, topo, e);
    const bool last_at_t = i + 1 == run.events.size() || run.events[i + 1].t > e.t + 1e-9;
    if (last_at_t) os << e.t << "," << count_lines_out() << "," << demand_loss() << "\n";
  }
  return os.str();
}

std::string modes_csv(const CaseDefinition& c, const CascadeRun& run, int top_k) {
  (void)c;
  std::ostringstream os;
  os << "tier,t,island,lambda_re,lambda_im,freq_hz,machine,shape_mag,phase_deg\n";
  for (const auto& tm : run.tier_modes) {
    if (!tm.settled) continue;
    for (const auto& mode : tm.verdict.modes) {
      const int n = std::min<int>(top_k, static_cast<int>(mode.machines.size()));
      for (int i = 0; i < n; ++i) {
        os << tm.tier_index << "," << tm.t << "," << tm.island_id << ","
           << mode.lambda.real() << "," << mode.lambda.imag() << "," << mode.freq_hz << ","
           << mode.machines[i] << "," << mode.shape_mag[i] << "," << mode.shape_phase_deg[i]
           << "\n";
      }
    }
  }
  return os.str();
}

void write_run_outputs(const std::string& dir, const CaseDefinition& c, const CascadeRun& run) {
  std::filesystem::create_directories(dir);
  auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream out(dir + "/" + name, std::ios::binary);
    out << content;
  };
  write("events.jsonl", event_log_jsonl(run));
  write("end_state.json", end_state_json(c, run));
  write("timeline.csv", tier_timeline_csv(c, run));
  if (run.method == RunMethod::BEMPC) write("modes.csv", modes_csv(c, run));
}

LoadedRun load_run_outputs(const std::string& dir) {
  LoadedRun lr;
  {
    std::ifstream in(dir + "/events.jsonl");
    if (!in) throw std::runtime_error("cannot read " + dir + "/events.jsonl");
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json j = json::parse(line);
      Event e;
      e.t = j.at("t").get<double>();
      e.tier = j.value("tier", -1);
      e.kind = event_kind_from_name(j.at("kind").get<std::string>());
      e.targets = j.at("targets").get<std::vector<int>>();
      e.island = j.value("island", -1);
      lr.events.push_back(e);
    }
  }
  {
    std::ifstream in(dir + "/end_state.json");
    if (!in) throw std::runtime_error("cannot read " + dir + "/end_state.json");
    json j = json::parse(in);
    lr.case_name = j.value("case", "");
    lr.method = j.value("method", "");
    std::string term = j.value("termination", "settled");
    lr.termination = term == "collapsed"
                         ? Termination::Collapsed
                         : (term == "nonconverged" ? Termination::NonConverged
                                                   : Termination::Settled);
    lr.wall_seconds = j.value("wall_seconds", 0.0);
    lr.sim_end_time = j.value("sim_end_time", 0.0);
    lr.end_state.demand_served_mw = j.value("demand_served_mw", 0.0);
    lr.end_state.demand_total_mw = j.value("demand_total_mw", 0.0);
    for (const auto& jb : j.at("buses")) {
      BusEnd b;
      b.id = jb.at("id").get<int>();
      b.energized = jb.at("energized").get<bool>();
      b.vm = jb.at("vm").get<double>();
      b.va_deg = jb.at("va_deg").get<double>();
      b.freq_hz = jb.at("freq_hz").get<double>();
      lr.end_state.buses.push_back(b);
    }
    for (const auto& jm : j.at("machines"))
      lr.end_state.machine_connected.push_back(jm.at("connected").get<bool>() ? 1 : 0);
    for (const auto& jb : j.at("branches"))
      lr.end_state.branch_in.push_back(jb.at("in").get<bool>() ? 1 : 0);
  }
  return lr;
}

LoadedRun view_of(const CaseDefinition& c, const CascadeRun& run) {
  LoadedRun lr;
  lr.events = run.events;
  lr.end_state = run.end_state;
  lr.termination = run.termination;
  lr.wall_seconds = run.wall_seconds;
  lr.sim_end_time = run.sim_end_time;
  lr.method = run_method_name(run.method);
  lr.case_name = c.name;
  return lr;
}

}  // namespace cascadesim
