#include "cascadesim/engine.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <stdexcept>
#include <thread>

namespace cascadesim {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

constexpr double kTimeEps = 1e-9;

Method integration_of(RunMethod m) {
  switch (m) {
    case RunMethod::TM: return Method::TM;
    case RunMethod::RK4: return Method::RK4Partitioned;
    default: return Method::BEM;
  }
}

bool uses_measurement_sps(RunMethod m) {
  return m == RunMethod::TM || m == RunMethod::RK4;
}

struct GlobalAction {
  Event ev;                       // t = fire time
  std::vector<int> remaining;     // targets not yet consumed
};

struct EngineCtx {
  const CaseDefinition* c = nullptr;
  const RunConfig* cfg = nullptr;
  RunMethod method = RunMethod::TM;
  Method integ = Method::TM;
  bool measurement_sps = false;
  RelayConfig relays;

  std::vector<IslandSim> running;
  std::vector<IslandSim> finished;
  std::vector<Event> log;
  std::vector<TierRecord> tiers;
  std::vector<GlobalAction> actions;
  std::map<int, std::vector<int>> ancestry_reg;  // island id -> ancestry
  int next_island_id = 1;
  bool any_nonconverged = false;
  RuntimeBreakdown breakdown;
};

bool targets_island(const GlobalAction& a, const IslandSim& isl) {
  for (int tgt : a.remaining) {
    switch (a.ev.kind) {
      case EventKind::InitialNodeOutage:
        if (isl.model.bus_local.count(tgt)) return true;
        break;
      case EventKind::SpsTrip:
      case EventKind::MachineTripOos:
        for (const auto& mc : isl.model.machines)
          if (mc.case_idx == tgt) return true;
        break;
      case EventKind::SpsLineTrip:
      case EventKind::LineTrip:
      case EventKind::InitialLineOutage:
        for (const auto& br : isl.model.branches)
          if (br.id == tgt) return true;
        break;
      default:
        break;
    }
  }
  return false;
}

std::optional<double> next_action_time(const EngineCtx& ctx, const IslandSim& isl) {
  std::optional<double> next;
  for (const auto& a : ctx.actions) {
    if (a.ev.t <= isl.t + kTimeEps) continue;
    if (!targets_island(a, isl)) continue;
    if (!next || a.ev.t < *next) next = a.ev.t;
  }
  for (const auto& e : isl.pending)
    if (e.t > isl.t + kTimeEps && (!next || e.t < *next)) next = e.t;
  return next;
}

Eigen::VectorXd relative_speeds(const IslandModel& m, const Eigen::VectorXd& x) {
  Eigen::VectorXd s(m.n_mach());
  for (int i = 0; i < m.n_mach(); ++i) s(i) = x(m.off(i, IslandModel::kDw));
  return s;
}

/// Feed one grid sample into the growing-oscillation detector; returns true
/// when a machine's speed envelope has grown across enough consecutive
/// blocks.
bool detector_ingest(IslandSim& isl, const GroundTruthSpsConfig& det, double t,
                     const Eigen::VectorXd& rel_speeds) {
  bool fire = false;
  for (int i = 0; i < isl.model.n_mach(); ++i) {
    const int cm = isl.model.machines[i].case_idx;
    auto& blk = isl.sps_det[cm];
    const double v = rel_speeds(i);
    if (blk.t0 < 0.0) {
      blk.t0 = t;
      blk.lo = blk.hi = v;
      continue;
    }
    blk.lo = std::min(blk.lo, v);
    blk.hi = std::max(blk.hi, v);
    if (t - blk.t0 < det.block_seconds) continue;
    blk.amps.push_back(blk.hi - blk.lo);
    while (blk.amps.size() > 8) blk.amps.pop_front();
    blk.t0 = t;
    blk.lo = blk.hi = v;

    if (t < isl.sps_suppress_until) continue;
    if (static_cast<int>(blk.amps.size()) < det.blocks + 1) continue;
    bool growing = blk.amps.back() >= det.amp_floor;
    for (int k = 0; k < det.blocks && growing; ++k) {
      const double newer = blk.amps[blk.amps.size() - 1 - k];
      const double older = blk.amps[blk.amps.size() - 2 - k];
      growing = newer >= det.growth_ratio * older && older > 0.0;
    }
    if (growing) fire = true;
  }
  return fire;
}

/// Rank machines by current oscillation amplitude for the measurement SPS.
std::vector<int> detector_ranked_machines(const IslandSim& isl) {
  std::vector<std::pair<double, int>> amp;
  for (const auto& [cm, ex] : isl.sps_det) {
    double a = ex.amps.empty() ? 0.0 : ex.amps.back();
    amp.emplace_back(a, cm);
  }
  std::sort(amp.begin(), amp.end(), [](const auto& x, const auto& y) {
    if (x.first != y.first) return x.first > y.first;
    return x.second < y.second;
  });
  std::vector<int> out;
  for (const auto& [a, cm] : amp) out.push_back(cm);
  return out;
}

void record_tier(EngineCtx& ctx, const IslandSim& isl) {
  TierRecord rec;
  rec.t = isl.t;
  rec.island_id = isl.id;
  rec.ancestry = isl.ancestry;
  rec.snapshot = isl;
  ctx.tiers.push_back(std::move(rec));
}

void finish_island(EngineCtx& ctx, IslandSim isl, IslandSim::St st) {
  isl.status = st;
  if (st == IslandSim::St::Collapsed) ctx.any_nonconverged = true;
  ctx.finished.push_back(std::move(isl));
}

/// Applies one tier of events to an island: topology update, algebraic
/// re-solve, split handling through the adaptive COI re-initialization.
/// The island is removed from ctx.running by the caller; children (or the
/// continuing island) are appended here.
void apply_events_to_island(EngineCtx& ctx, IslandSim isl, std::vector<Event> due) {
  const double t = isl.t;
  std::sort(due.begin(), due.end(), event_order_less);
  for (auto& e : due) {
    e.t = t;
    e.island = isl.id;
    if (e.kind == EventKind::UvlsShed)
      apply_shed_to_topology(*ctx.c, isl.topo, e, isl.relays.config().lambda_shed);
    else
      apply_event_to_topology(*ctx.c, isl.topo, e);
    ctx.log.push_back(e);
  }
  isl.relays.note_event(t);
  isl.last_event_t = t;
  isl.speed_hist.clear();
  isl.sps_det.clear();

  auto part = find_islands(*ctx.c, isl.topo);
  std::vector<Island> components;
  for (auto& cand : part.islands) {
    bool inside = true;
    for (int b : cand.bus_ids)
      if (!isl.model.bus_local.count(b)) {
        inside = false;
        break;
      }
    if (inside) components.push_back(std::move(cand));
  }

  std::vector<const Island*> live;
  for (const auto& comp : components)
    if (comp.has_generation) live.push_back(&comp);

  if (components.size() > 1) {
    for (const auto& comp : components) {
      Event se;
      se.t = t;
      se.kind = EventKind::IslandSplit;
      se.targets = comp.bus_ids;
      se.island = isl.id;
      ctx.log.push_back(se);
    }
  }

  const double resolve_tol = ctx.cfg->integ.eps;
  const bool same_shape =
      live.size() == 1 && live[0]->bus_ids == isl.model.bus_ids &&
      [&] {
        if (static_cast<int>(live[0]->machine_indices.size()) != isl.model.n_mach())
          return false;
        for (int i = 0; i < isl.model.n_mach(); ++i)
          if (live[0]->machine_indices[i] != isl.model.machines[i].case_idx) return false;
        return true;
      }();

  if (same_shape) {
    IslandModel next = build_island_model(*ctx.c, isl.topo, *live[0]);
    carry_setpoints(isl.model, next);
    Eigen::VectorXd v = isl.state.v;
    // A failed V-only re-solve is not fatal: the next coupled step solves F
    // and G together from this guess, and the usual fail streak decides. A
    // "solution" that jumps onto the low-voltage branch is discarded the
    // same way.
    const double vmin_pre = bus_voltage_mags(isl.state.v).minCoeff();
    if (resolve_algebraic(next, isl.state.x, v, resolve_tol, 30)) {
      const double vmin_post = bus_voltage_mags(v).minCoeff();
      if (vmin_post < 0.35 && vmin_pre > 0.6) v = isl.state.v;
    }
    // on failure the best-effort iterate stays in v as the next guess
    isl.model = std::move(next);
    isl.state.v = std::move(v);
    isl.relays.retain_elements(isl.model);
    isl.fixed_left = ctx.cfg->integ.post_event_steps;
    isl.dt_next = ctx.cfg->integ.dt_event;
    isl.event_dt_fail_streak = 0;
    record_tier(ctx, isl);
    ctx.running.push_back(std::move(isl));
    return;
  }

  for (const Island* child : live) {
    ChildInit init = reinitialize_child(*ctx.c, isl.topo, *child, isl.model, isl.state,
                                        resolve_tol);
    IslandSim kid;
    kid.id = ctx.next_island_id++;
    kid.ancestry = isl.ancestry;
    kid.ancestry.push_back(isl.id);
    ctx.ancestry_reg[kid.id] = kid.ancestry;
    kid.topo = isl.topo;
    kid.model = std::move(init.model);
    kid.state = std::move(init.state);
    kid.relays = isl.relays;
    kid.relays.retain_elements(kid.model);
    kid.t = t;
    kid.birth_t = t;
    kid.last_event_t = t;
    kid.dt_next = ctx.cfg->integ.dt_event;
    kid.fixed_left = ctx.cfg->integ.post_event_steps;
    kid.sps_suppress_until = isl.sps_suppress_until;
    for (const auto& e : isl.pending) {
      bool mine = false;
      for (int tgt : e.targets) {
        if (e.kind == EventKind::SpsTrip || e.kind == EventKind::MachineTripOos) {
          for (const auto& mc : kid.model.machines) mine = mine || mc.case_idx == tgt;
        } else if (e.kind == EventKind::SpsLineTrip || e.kind == EventKind::LineTrip ||
                   e.kind == EventKind::InitialLineOutage) {
          for (const auto& br : kid.model.branches) mine = mine || br.id == tgt;
        } else {
          mine = mine || kid.model.bus_local.count(tgt) > 0;
        }
      }
      if (mine) kid.pending.push_back(e);
    }
    record_tier(ctx, kid);
    ctx.running.push_back(std::move(kid));
  }
  // Machine-less components simply cease to be simulated; their demand is
  // counted as lost when the end state is assembled.
}

/// Collect everything due at the island's current time.
std::vector<Event> gather_due(EngineCtx& ctx, IslandSim& isl) {
  std::vector<Event> due = isl.relays.collect_due(isl.t);
  for (auto it = isl.pending.begin(); it != isl.pending.end();) {
    if (it->t <= isl.t + kTimeEps) {
      due.push_back(*it);
      it = isl.pending.erase(it);
    } else {
      ++it;
    }
  }
  for (auto& a : ctx.actions) {
    if (a.ev.t > isl.t + kTimeEps || a.remaining.empty()) continue;
    std::vector<int> mine, rest;
    for (int tgt : a.remaining) {
      bool here = false;
      switch (a.ev.kind) {
        case EventKind::InitialNodeOutage: here = isl.model.bus_local.count(tgt) > 0; break;
        case EventKind::SpsTrip:
        case EventKind::MachineTripOos:
          for (const auto& mc : isl.model.machines) here = here || mc.case_idx == tgt;
          break;
        case EventKind::SpsLineTrip:
        case EventKind::LineTrip:
        case EventKind::InitialLineOutage:
          for (const auto& br : isl.model.branches) here = here || br.id == tgt;
          break;
        default: break;
      }
      (here ? mine : rest).push_back(tgt);
    }
    if (!mine.empty()) {
      Event e = a.ev;
      e.targets = std::move(mine);
      due.push_back(std::move(e));
      a.remaining = std::move(rest);
    }
  }
  return due;
}

void ingest_measurements(EngineCtx& ctx, IslandSim& isl, double t0, const SystemState& s0,
                         double t1, const SystemState& s1) {
  const double md = isl.relays.config().measurement_dt;
  double g = (std::floor(t0 / md + kTimeEps) + 1.0) * md;
  bool fire = false;
  for (; g <= t1 + kTimeEps; g += md) {
    const double w = (g - t0) / (t1 - t0);
    Eigen::VectorXd v = (1.0 - w) * s0.v + w * s1.v;
    Eigen::VectorXd x = (1.0 - w) * s0.x + w * s1.x;
    Eigen::VectorXd imags = branch_current_mags(isl.model, v);
    Eigen::VectorXd vmags = bus_voltage_mags(v);
    isl.relays.ingest_sample(g, isl.model, imags, vmags);
    if (ctx.measurement_sps)
      fire = detector_ingest(isl, ctx.cfg->gt_sps, g, relative_speeds(isl.model, x)) || fire;
  }
  if (fire && t1 >= isl.sps_suppress_until) {
    Event e;
    e.t = t1 + isl.relays.config().sps_delay;
    if (isl.relays.config().sps_line_branch) {
      e.kind = EventKind::SpsLineTrip;
      e.targets = {*isl.relays.config().sps_line_branch};
    } else {
      e.kind = EventKind::SpsTrip;
      auto ranked = detector_ranked_machines(isl);
      const int n = std::min<int>(isl.relays.config().sps_machine_count,
                                  static_cast<int>(ranked.size()));
      e.targets.assign(ranked.begin(), ranked.begin() + n);
      std::sort(e.targets.begin(), e.targets.end());
    }
    isl.pending.push_back(e);
    isl.sps_suppress_until = e.t + ctx.cfg->gt_sps.rearm_hold;
  }
}

/// One scheduling quantum for an island: fire due events, or take one
/// integration step. Returns false when the island left the running set.
void advance_island(EngineCtx& ctx, std::size_t idx) {
  IslandSim& isl = ctx.running[idx];

  auto due = gather_due(ctx, isl);
  if (!due.empty()) {
    IslandSim moved = std::move(isl);
    ctx.running.erase(ctx.running.begin() + static_cast<long>(idx));
    apply_events_to_island(ctx, std::move(moved), std::move(due));
    return;
  }

  double pending_t = std::numeric_limits<double>::infinity();
  if (auto nt = next_action_time(ctx, isl)) pending_t = *nt;
  StopVerdict stop = check_stop(isl, ctx.cfg->stop, pending_t);
  if (stop == StopVerdict::Settled) {
    IslandSim moved = std::move(isl);
    ctx.running.erase(ctx.running.begin() + static_cast<long>(idx));
    finish_island(ctx, std::move(moved), IslandSim::St::Settled);
    return;
  }

  const auto& integ = ctx.cfg->integ;
  double dt;
  if (ctx.integ == Method::RK4Partitioned) {
    dt = integ.rk4_dt;
  } else if (isl.fixed_left > 0) {
    dt = integ.dt_event;
  } else {
    dt = isl.dt_next;
  }
  std::optional<double> sched = isl.relays.next_scheduled_after(isl.t);
  if (auto nt = next_action_time(ctx, isl))
    sched = sched ? std::min(*sched, *nt) : *nt;
  if (sched) dt = std::min(dt, *sched - isl.t);
  dt = std::min(dt, ctx.cfg->stop.t_max - isl.t);
  dt = std::max(dt, 1e-6);

  StepResult res;
  bool accepted = false;
  while (!accepted) {
    bool failed = false;
    const double floor_probe = ctx.integ == Method::TM ? integ.tm_dt_min : integ.dt_event;
    IntegratorConfig attempt = integ;
    if (dt <= floor_probe + kTimeEps) attempt.max_newton_iters = 3 * integ.max_newton_iters;
    try {
      if (ctx.integ == Method::TM)
        res = step_tm(isl.model, isl.state, dt, attempt);
      else if (ctx.integ == Method::RK4Partitioned)
        res = step_rk4_partitioned(isl.model, isl.state, dt, attempt);
      else
        res = step_bem(isl.model, isl.state, dt, attempt);
      failed = !res.converged;
    } catch (const SingularJacobianError&) {
      failed = true;
    }

    if (failed) {
      if (ctx.integ == Method::RK4Partitioned) {
        IslandSim moved = std::move(isl);
        ctx.running.erase(ctx.running.begin() + static_cast<long>(idx));
        finish_island(ctx, std::move(moved), IslandSim::St::Collapsed);
        return;
      }
      const double floor_dt = ctx.integ == Method::TM ? integ.tm_dt_min : integ.dt_event;
      if (dt > floor_dt + kTimeEps) {
        dt = std::max(dt / 2.0, floor_dt);
        continue;
      }
      if (++isl.event_dt_fail_streak >= 2) {
        IslandSim moved = std::move(isl);
        ctx.running.erase(ctx.running.begin() + static_cast<long>(idx));
        finish_island(ctx, std::move(moved), IslandSim::St::Collapsed);
        return;
      }
      dt = floor_dt;
      continue;
    }

    if (ctx.integ == Method::TM && isl.fixed_left == 0) {
      const double lte = tm_lte_estimate(isl.model, isl.state, res);
      if (tm_step_rejected(lte, integ) && dt > integ.tm_dt_min + kTimeEps) {
        dt = std::max(dt / 2.0, integ.tm_dt_min);
        continue;
      }
      isl.dt_next = adapt_step_tm(lte, res.dt_taken, integ);
    }
    accepted = true;
  }
  isl.event_dt_fail_streak = 0;

  const double t0 = isl.t;
  SystemState prev = isl.state;
  isl.state.x = res.x;
  isl.state.v = res.v;
  isl.t = t0 + res.dt_taken;
  if (isl.fixed_left > 0) --isl.fixed_left;

  if (ctx.integ == Method::BEM) {
    if (res.iterations > integ.iter_threshold)
      isl.dt_next = integ.dt_event;
    else if (isl.fixed_left == 0)
      isl.dt_next = adapt_step_bem(res.dt_taken, res.first_mismatch_inf, integ);
  }

  ingest_measurements(ctx, isl, t0, prev, isl.t, isl.state);

  auto oos = isl.relays.check_out_of_step(isl.t, isl.model, isl.state.x);
  for (auto& e : oos) isl.pending.push_back(e);

  isl.speed_hist.emplace_back(isl.t, machine_speeds(isl.model, isl.state.x));
  while (isl.speed_hist.size() > 1 &&
         isl.speed_hist[1].first <= isl.t - ctx.cfg->stop.window - kTimeEps)
    isl.speed_hist.pop_front();
}

void run_worklist(EngineCtx& ctx) {
  while (true) {
    std::size_t best = ctx.running.size();
    for (std::size_t i = 0; i < ctx.running.size(); ++i) {
      if (best == ctx.running.size() || ctx.running[i].t < ctx.running[best].t ||
          (ctx.running[i].t == ctx.running[best].t && ctx.running[i].id < ctx.running[best].id))
        best = i;
    }
    if (best == ctx.running.size()) break;
    advance_island(ctx, best);
  }
}

void seed_initial_islands(EngineCtx& ctx, const CaseDefinition& c) {
  TopologyState topo = TopologyState::all_in(c);
  auto part = find_islands(c, topo);
  auto pf = solve_power_flow(c);
  if (!pf.converged)
    throw std::runtime_error("initialization power flow did not converge (mismatch " +
                             std::to_string(pf.mismatch_inf) + ")");
  auto islands = initialize_islands(c, topo, part, pf);
  for (auto& [model, state] : islands) {
    IslandSim isl;
    isl.id = ctx.next_island_id++;
    ctx.ancestry_reg[isl.id] = {};
    isl.topo = topo;
    isl.model = std::move(model);
    isl.state = std::move(state);
    isl.relays = RelaySystem(ctx.relays, 0.0);
    isl.t = 0.0;
    isl.dt_next = ctx.cfg->integ.dt_event;
    isl.fixed_left = 0;
    ctx.running.push_back(std::move(isl));
  }
}

void assign_tiers(EngineCtx& ctx) {
  std::sort(ctx.log.begin(), ctx.log.end(), [](const Event& a, const Event& b) {
    if (a.t != b.t) return a.t < b.t;
    if (a.island != b.island) return a.island < b.island;
    return event_order_less(a, b);
  });
  std::vector<double> times;
  for (const auto& e : ctx.log)
    if (times.empty() || e.t > times.back() + kTimeEps) times.push_back(e.t);
  auto tier_of = [&](double t) {
    for (std::size_t i = 0; i < times.size(); ++i)
      if (std::abs(times[i] - t) <= kTimeEps) return static_cast<int>(i);
    return -1;
  };
  for (auto& e : ctx.log) e.tier = tier_of(e.t);
  std::sort(ctx.tiers.begin(), ctx.tiers.end(), [](const TierRecord& a, const TierRecord& b) {
    if (a.t != b.t) return a.t < b.t;
    return a.island_id < b.island_id;
  });
  for (auto& rec : ctx.tiers) rec.index = tier_of(rec.t);
}

EndState assemble_end_state(const EngineCtx& ctx) {
  const CaseDefinition& c = *ctx.c;
  EndState end;
  end.demand_total_mw = c.total_load_mw();

  TopologyState topo = replay_events(c, ctx.log, ctx.relays.lambda_shed);

  struct BusInfo {
    bool seen = false;
    bool energized = false;
    double vm = 0, va = 0, f = 0;
  };
  std::map<int, BusInfo> info;
  for (const auto& isl : ctx.finished) {
    const bool ok = isl.status == IslandSim::St::Settled;
    const int nb = isl.model.n_bus();
    const double f_island =
        isl.model.f_nominal * (1.0 + isl.state.x(isl.model.off_dw_coi()));
    for (int k = 0; k < nb; ++k) {
      BusInfo bi;
      bi.seen = true;
      bi.energized = ok;
      if (ok) {
        bi.vm = std::hypot(isl.state.v(k), isl.state.v(nb + k));
        bi.va = std::atan2(isl.state.v(nb + k), isl.state.v(k)) * 180.0 / M_PI;
        bi.f = f_island;
      }
      info[isl.model.bus_ids[k]] = bi;
    }
  }

  end.buses.resize(c.buses.size());
  for (std::size_t i = 0; i < c.buses.size(); ++i) {
    BusEnd be;
    be.id = c.buses[i].id;
    auto it = info.find(be.id);
    if (it != info.end() && it->second.energized && topo.bus_in[i]) {
      be.energized = true;
      be.vm = it->second.vm;
      be.va_deg = it->second.va;
      be.freq_hz = it->second.f;
    }
    end.buses[i] = be;
    if (be.energized) end.demand_served_mw += c.buses[i].p_load_mw * topo.shed_remaining[i];
  }
  end.branch_in.assign(c.branches.size(), 0);
  for (std::size_t i = 0; i < c.branches.size(); ++i) end.branch_in[i] = topo.branch_in[i];
  end.machine_connected.assign(c.machines.size(), 0);
  for (std::size_t mi = 0; mi < c.machines.size(); ++mi) {
    if (!topo.machine_in[mi]) continue;
    int bi = c.bus_index(c.machines[mi].bus);
    end.machine_connected[mi] = end.buses[bi].energized ? 1 : 0;
  }
  return end;
}

CascadeRun finalize_run(EngineCtx& ctx, RunMethod method) {
  assign_tiers(ctx);
  CascadeRun run;
  run.method = method;
  run.events = ctx.log;
  run.tiers = ctx.tiers;
  run.end_state = assemble_end_state(ctx);
  run.breakdown = ctx.breakdown;
  run.lambda_shed_used = ctx.relays.lambda_shed;
  double t_end = 0.0;
  for (const auto& isl : ctx.finished) t_end = std::max(t_end, isl.t);
  run.sim_end_time = t_end;

  bool any_energized = false;
  for (const auto& b : run.end_state.buses) any_energized = any_energized || b.energized;
  if (ctx.any_nonconverged)
    run.termination = Termination::NonConverged;
  else if (!any_energized)
    run.termination = Termination::Collapsed;
  else
    run.termination = Termination::Settled;
  return run;
}

EngineCtx make_ctx(const CaseDefinition& c, const RunConfig& cfg, RunMethod method) {
  EngineCtx ctx;
  ctx.c = &c;
  ctx.cfg = &cfg;
  ctx.method = method;
  ctx.integ = integration_of(method);
  ctx.measurement_sps = uses_measurement_sps(method);
  ctx.relays = cfg.use_case_relays ? c.relays : cfg.relays;
  return ctx;
}

void push_initial_outages(EngineCtx& ctx, const CaseDefinition& c, const RunConfig& cfg) {
  std::vector<int> buses = resolve_outage_buses(c, cfg.outages);
  if (!buses.empty()) {
    GlobalAction a;
    a.ev.t = cfg.t_outage;
    a.ev.kind = EventKind::InitialNodeOutage;
    a.ev.targets = buses;
    a.remaining = buses;
    ctx.actions.push_back(std::move(a));
  }
  if (!cfg.outages.explicit_branches.empty()) {
    GlobalAction a;
    a.ev.t = cfg.t_outage;
    a.ev.kind = EventKind::InitialLineOutage;
    a.ev.targets = cfg.outages.explicit_branches;
    a.remaining = cfg.outages.explicit_branches;
    ctx.actions.push_back(std::move(a));
  }
}

CascadeRun run_single_pass(const CaseDefinition& c, const RunConfig& cfg, RunMethod method) {
  EngineCtx ctx = make_ctx(c, cfg, method);
  const auto t0 = Clock::now();
  seed_initial_islands(ctx, c);
  push_initial_outages(ctx, c, cfg);
  run_worklist(ctx);
  ctx.breakdown.a += seconds_since(t0);
  CascadeRun run = finalize_run(ctx, method);
  run.wall_seconds = seconds_since(t0);
  return run;
}

struct PredictorJob {
  std::size_t tier_pos = 0;
  TierModes result;
  double b1 = 0, b2 = 0, b3 = 0;
};

void run_predictor_job(const EngineCtx& ctx, const TierRecord& rec, PredictorJob& job) {
  job.result.tier_index = rec.index;
  job.result.t = rec.t;
  job.result.island_id = rec.island_id;
  job.result.analyzed = true;

  auto t_a = Clock::now();
  EquilibriumResult eq =
      settle_equilibrium(rec.snapshot.model, rec.snapshot.state, ctx.cfg->integ, ctx.cfg->pc);
  job.b1 = seconds_since(t_a);
  job.result.settled = eq.settled_ok;
  if (!eq.settled_ok) return;

  try {
    auto t_b = Clock::now();
    Eigen::MatrixXd a = build_a_matrix(eq.jac, eq.dt_final);
    job.b2 = seconds_since(t_b);
    auto t_c = Clock::now();
    Eigensystem eig = eigendecompose(a);
    job.b3 = seconds_since(t_c);
    job.result.verdict = detect_and_rank(eig, rec.snapshot.model, ctx.cfg->pc);
  } catch (const std::exception&) {
    job.result.settled = false;  // degenerate equilibrium, leave unanalyzed
  }
}

}  // namespace

const char* run_method_name(RunMethod m) {
  switch (m) {
    case RunMethod::TM: return "tm";
    case RunMethod::BEM: return "bem";
    case RunMethod::BEMPC: return "bem_pc";
    case RunMethod::RK4: return "rk4";
  }
  return "unknown";
}

RunMethod run_method_from_name(const std::string& name) {
  if (name == "tm") return RunMethod::TM;
  if (name == "bem") return RunMethod::BEM;
  if (name == "bem_pc" || name == "bempc") return RunMethod::BEMPC;
  if (name == "rk4") return RunMethod::RK4;
  throw std::invalid_argument("unknown method: " + name);
}

const char* termination_name(Termination t) {
  switch (t) {
    case Termination::Settled: return "settled";
    case Termination::Collapsed: return "collapsed";
    case Termination::NonConverged: return "nonconverged";
  }
  return "unknown";
}

std::vector<int> resolve_outage_buses(const CaseDefinition& c, const OutageSpec& spec) {
  if (!spec.explicit_buses.empty()) return spec.explicit_buses;
  if (!spec.explicit_branches.empty()) return {};
  if (spec.random_count <= 0) return {};
  std::mt19937_64 rng(spec.seed);
  std::vector<int> ids;
  for (const auto& b : c.buses) ids.push_back(b.id);
  std::vector<int> out;
  for (int k = 0; k < spec.random_count && !ids.empty(); ++k) {
    std::uniform_int_distribution<std::size_t> pick(0, ids.size() - 1);
    std::size_t i = pick(rng);
    out.push_back(ids[i]);
    ids.erase(ids.begin() + static_cast<long>(i));
  }
  std::sort(out.begin(), out.end());
  return out;
}

StopVerdict check_stop(const IslandSim& isl, const StopConfig& stop, double global_pending_t) {
  if (isl.t >= stop.t_max) return StopVerdict::Settled;
  if (std::isfinite(global_pending_t)) return StopVerdict::Continue;
  // Relay actions anticipated inside the horizon keep the run alive; a
  // countdown thousands of seconds out (flat inverse-time curve near pickup)
  // does not.
  if (auto sched = isl.relays.next_scheduled_after(isl.t);
      sched && *sched <= isl.t + stop.relay_horizon)
    return StopVerdict::Continue;
  if (!isl.pending.empty()) return StopVerdict::Continue;
  if (isl.t - std::max(isl.birth_t, isl.last_event_t) < stop.window) return StopVerdict::Continue;
  if (isl.speed_hist.empty() ||
      isl.speed_hist.front().first > isl.t - stop.window + kTimeEps)
    return StopVerdict::Continue;
  double worst = 0.0;
  for (int i = 0; i < isl.model.n_mach(); ++i) {
    double lo = isl.speed_hist.front().second(i), hi = lo;
    for (const auto& [tt, sp] : isl.speed_hist) {
      lo = std::min(lo, sp(i));
      hi = std::max(hi, sp(i));
    }
    worst = std::max(worst, hi - lo);
  }
  if (worst > stop.speed_tol) return StopVerdict::Continue;
  if (isl.relays.any_violation(stop.relay_horizon)) return StopVerdict::Continue;
  return StopVerdict::Settled;
}

CascadeRun run_tm_ground_truth(const CaseDefinition& c, const RunConfig& cfg) {
  RunConfig gt = cfg;
  gt.integ.method = Method::TM;
  return run_single_pass(c, gt, RunMethod::TM);
}

CascadeRun run_bem_plain(const CaseDefinition& c, const RunConfig& cfg) {
  return run_single_pass(c, cfg, RunMethod::BEM);
}

CascadeRun run_rk4_partitioned(const CaseDefinition& c, const RunConfig& cfg) {
  return run_single_pass(c, cfg, RunMethod::RK4);
}

CascadeRun run_bem_pc(const CaseDefinition& c, const RunConfig& cfg) {
  const auto wall0 = Clock::now();

  struct Correction {
    int island_id;
    double floor_t;
  };
  std::vector<Correction> corrections;
  std::vector<Event> sps_actions;

  EngineCtx ctx = make_ctx(c, cfg, RunMethod::BEMPC);
  seed_initial_islands(ctx, c);
  push_initial_outages(ctx, c, cfg);
  {
    const auto t0 = Clock::now();
    run_worklist(ctx);
    ctx.breakdown.a += seconds_since(t0);
  }

  int rounds = 1;
  bool cap_hit = false;
  std::vector<TierModes> modes_history;  // across rounds, in analysis order
  std::vector<TierModes> modes_report;

  while (true) {
    assign_tiers(ctx);

    // Predictor: analyze tiers in order, skipping corrected lineages below
    // their action floor, and stop at the first unstable verdict.
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < ctx.tiers.size(); ++i) {
      const auto& rec = ctx.tiers[i];
      bool skip = false;
      for (const auto& corr : corrections) {
        const bool in_lineage =
            rec.island_id == corr.island_id ||
            std::find(rec.ancestry.begin(), rec.ancestry.end(), corr.island_id) !=
                rec.ancestry.end();
        if (in_lineage && rec.t < corr.floor_t - kTimeEps) skip = true;
      }
      if (!skip) eligible.push_back(i);
    }

    std::vector<PredictorJob> jobs(eligible.size());
    for (std::size_t j = 0; j < eligible.size(); ++j) jobs[j].tier_pos = eligible[j];

    if (cfg.pc.use_worker_pool && jobs.size() > 1) {
      std::vector<std::thread> pool;
      std::atomic<std::size_t> cursor{0};
      const int nthreads = std::max(1, cfg.pc.pool_threads);
      for (int w = 0; w < nthreads; ++w) {
        pool.emplace_back([&] {
          while (true) {
            std::size_t j = cursor.fetch_add(1);
            if (j >= jobs.size()) break;
            run_predictor_job(ctx, ctx.tiers[jobs[j].tier_pos], jobs[j]);
          }
        });
      }
      for (auto& th : pool) th.join();
    } else {
      for (auto& job : jobs) {
        run_predictor_job(ctx, ctx.tiers[job.tier_pos], job);
        if (job.result.settled && job.result.verdict.unstable) break;  // later tiers skipped
      }
    }

    modes_report.clear();
    std::size_t unstable_job = jobs.size();
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      if (!jobs[j].result.analyzed) continue;
      ctx.breakdown.b1 += jobs[j].b1;
      ctx.breakdown.b2 += jobs[j].b2;
      ctx.breakdown.b3 += jobs[j].b3;
      modes_report.push_back(jobs[j].result);
      if (jobs[j].result.settled && jobs[j].result.verdict.unstable && unstable_job == jobs.size())
        unstable_job = j;
    }
    if (unstable_job == jobs.size()) {
      modes_history.insert(modes_history.end(), modes_report.begin(), modes_report.end());
      break;  // no instability: done
    }
    modes_report.resize(unstable_job + 1);
    modes_history.insert(modes_history.end(), modes_report.begin(), modes_report.end());

    if (rounds >= cfg.pc.round_cap) {
      cap_hit = true;
      break;
    }
    ++rounds;

    const TierRecord rec = ctx.tiers[jobs[unstable_job].tier_pos];  // copy before pruning
    const auto& verdict = jobs[unstable_job].result.verdict;
    const double t_f = rec.t;
    const double t_fire = t_f + ctx.relays.sps_delay;

    Event sps;
    sps.t = t_fire;
    if (ctx.relays.sps_line_branch) {
      sps.kind = EventKind::SpsLineTrip;
      sps.targets = {*ctx.relays.sps_line_branch};
    } else {
      sps.kind = EventKind::SpsTrip;
      std::map<int, double> best_shape;
      for (const auto& mode : verdict.modes)
        for (std::size_t i = 0; i < mode.machines.size(); ++i) {
          auto [it, fresh] = best_shape.try_emplace(mode.machines[i], mode.shape_mag[i]);
          if (!fresh) it->second = std::max(it->second, mode.shape_mag[i]);
        }
      std::vector<std::pair<double, int>> ranked;
      for (const auto& [cm, mag] : best_shape) ranked.emplace_back(mag, cm);
      std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
      });
      const int n = std::min<int>(ctx.relays.sps_machine_count, static_cast<int>(ranked.size()));
      for (int i = 0; i < n; ++i) sps.targets.push_back(ranked[i].second);
      std::sort(sps.targets.begin(), sps.targets.end());
    }
    sps_actions.push_back(sps);
    corrections.push_back({rec.island_id, t_fire});

    // Restart: discard this lineage past t_f and resume from the snapshot
    // with the functional action scheduled.
    std::set<int> lineage{rec.island_id};
    for (const auto& [iid, anc] : ctx.ancestry_reg)
      if (std::find(anc.begin(), anc.end(), rec.island_id) != anc.end()) lineage.insert(iid);

    std::erase_if(ctx.log, [&](const Event& e) {
      return lineage.count(e.island) && e.t > t_f + kTimeEps;
    });
    std::erase_if(ctx.tiers, [&](const TierRecord& tr) {
      return lineage.count(tr.island_id) && tr.t > t_f + kTimeEps;
    });
    std::erase_if(ctx.finished, [&](const IslandSim& s) { return lineage.count(s.id) > 0; });
    ctx.running.clear();
    ctx.running.push_back(rec.snapshot);

    ctx.actions.clear();
    for (const auto& a : sps_actions) {
      if (a.t <= t_f + kTimeEps) continue;  // already embodied in the kept prefix
      GlobalAction ga;
      ga.ev = a;
      ga.remaining = a.targets;
      ctx.actions.push_back(std::move(ga));
    }

    const auto t0 = Clock::now();
    run_worklist(ctx);
    ctx.breakdown.a += seconds_since(t0);
  }

  CascadeRun run = finalize_run(ctx, RunMethod::BEMPC);
  run.pc_rounds = rounds;
  run.pc_round_cap_hit = cap_hit;
  run.tier_modes = std::move(modes_history);
  run.wall_seconds = seconds_since(wall0);
  return run;
}

CascadeRun run_cascade(const CaseDefinition& c, const RunConfig& cfg, RunMethod method) {
  switch (method) {
    case RunMethod::TM: return run_tm_ground_truth(c, cfg);
    case RunMethod::BEM: return run_bem_plain(c, cfg);
    case RunMethod::BEMPC: return run_bem_pc(c, cfg);
    case RunMethod::RK4: return run_rk4_partitioned(c, cfg);
  }
  throw std::invalid_argument("bad method");
}

}  // namespace cascadesim
