#include "cascadesim/protection.hpp"

#include <algorithm>
#include <cmath>

namespace cascadesim {

const char* event_kind_name(EventKind k) {
  switch (k) {
    case EventKind::InitialNodeOutage: return "initial_node_outage";
    case EventKind::InitialLineOutage: return "initial_line_outage";
    case EventKind::LineTrip: return "line_trip";
    case EventKind::UvlsShed: return "uvls_shed";
    case EventKind::MachineTripOos: return "machine_trip_oos";
    case EventKind::SpsTrip: return "sps_trip";
    case EventKind::SpsLineTrip: return "sps_line_trip";
    case EventKind::IslandSplit: return "island_split";
  }
  return "unknown";
}

bool event_order_less(const Event& a, const Event& b) {
  if (a.t != b.t) return a.t < b.t;
  if (a.kind != b.kind) return static_cast<int>(a.kind) < static_cast<int>(b.kind);
  return a.targets < b.targets;
}

double oc_trip_delay(double current_ratio) {
  return 0.14 / (std::pow(current_ratio, 0.02) - 1.0);
}

void apply_event_to_topology(const CaseDefinition& c, TopologyState& topo, const Event& e) {
  auto branch_slot = [&](int id) {
    for (std::size_t i = 0; i < c.branches.size(); ++i)
      if (c.branches[i].id == id) return static_cast<int>(i);
    return -1;
  };
  switch (e.kind) {
    case EventKind::LineTrip:
    case EventKind::SpsLineTrip:
    case EventKind::InitialLineOutage:
      for (int id : e.targets) {
        int s = branch_slot(id);
        if (s >= 0) topo.branch_in[s] = 0;
      }
      break;
    case EventKind::MachineTripOos:
    case EventKind::SpsTrip:
      for (int mi : e.targets)
        if (mi >= 0 && mi < static_cast<int>(topo.machine_in.size())) topo.machine_in[mi] = 0;
      break;
    case EventKind::InitialNodeOutage:
      for (int bus_id : e.targets) {
        int bi = c.bus_index(bus_id);
        if (bi < 0) continue;
        topo.bus_in[bi] = 0;
        topo.shed_remaining[bi] = 0.0;
        for (std::size_t s = 0; s < c.branches.size(); ++s)
          if (c.branches[s].from_bus == bus_id || c.branches[s].to_bus == bus_id)
            topo.branch_in[s] = 0;
        for (std::size_t mi = 0; mi < c.machines.size(); ++mi)
          if (c.machines[mi].bus == bus_id) topo.machine_in[mi] = 0;
      }
      break;
    case EventKind::UvlsShed:
    case EventKind::IslandSplit:
      break;
  }
}

void apply_shed_to_topology(const CaseDefinition& c, TopologyState& topo, const Event& e,
                            double lambda_shed) {
  for (int bus_id : e.targets) {
    int bi = c.bus_index(bus_id);
    if (bi >= 0) topo.shed_remaining[bi] *= (1.0 - lambda_shed);
  }
}

TopologyState replay_events(const CaseDefinition& c, const std::vector<Event>& events,
                            double lambda_shed) {
  TopologyState topo = TopologyState::all_in(c);
  for (const auto& e : events) {
    if (e.kind == EventKind::UvlsShed)
      apply_shed_to_topology(c, topo, e, lambda_shed);
    else
      apply_event_to_topology(c, topo, e);
  }
  return topo;
}

void RelaySystem::Window::push(double t, double v, double span) {
  samples.emplace_back(t, v);
  sum += v;
  while (!samples.empty() && samples.front().first < t - span - 1e-12) {
    sum -= samples.front().second;
    samples.pop_front();
  }
}

double RelaySystem::Window::average() const {
  return samples.empty() ? 0.0 : sum / static_cast<double>(samples.size());
}

bool RelaySystem::Window::full(double span, double grid_dt) const {
  const auto need = static_cast<std::size_t>(std::lround(span / grid_dt));
  return samples.size() >= need;
}

RelaySystem::RelaySystem(const RelayConfig& cfg, double t_birth)
    : cfg_(cfg), birth_t_(t_birth) {
  next_oc_eval_ = std::floor(t_birth + 1e-12) + 1.0;  // next whole second
}

void RelaySystem::ingest_sample(double t, const IslandModel& model,
                                const Eigen::VectorXd& current_mags,
                                const Eigen::VectorXd& voltage_mags) {
  for (std::size_t b = 0; b < model.branches.size(); ++b) {
    const auto& br = model.branches[b];
    limits_[br.id] = br.current_limit;
    current_win_[br.id].push(t, current_mags(static_cast<Eigen::Index>(b)), cfg_.t_w_oc);
  }
  for (int k = 0; k < model.n_bus(); ++k) {
    const int bus_id = model.bus_ids[k];
    const bool has_load = model.p_load(k) != 0.0 || model.q_load(k) != 0.0;
    if (!has_load) continue;
    auto& win = voltage_win_[bus_id];
    win.push(t, voltage_mags(k), cfg_.t_w_uvls);

    auto& st = uvls_[bus_id];
    if (st.shed_count >= cfg_.k_shed_max) continue;
    if (!win.full(cfg_.t_w_uvls, cfg_.measurement_dt)) continue;
    if (win.average() < cfg_.v_th) {
      if (st.violation_start < 0.0) {
        st.violation_start = t;
        st.scheduled_shed = t + cfg_.t_tp_uvls;
      }
    } else {
      st.violation_start = -1.0;
      st.scheduled_shed = -1.0;
    }
  }

  while (next_oc_eval_ <= t + 1e-12) {
    evaluate_oc(next_oc_eval_);
    next_oc_eval_ += 1.0;
  }
}

void RelaySystem::evaluate_oc(double t) {
  if (t <= oc_freeze_until_ + 1e-12) return;  // hold pre-event delays
  for (auto& [branch_id, win] : current_win_) {
    if (!win.full(cfg_.t_w_oc, cfg_.measurement_dt)) continue;
    auto lim_it = limits_.find(branch_id);
    if (lim_it == limits_.end() || lim_it->second <= 0.0) continue;
    const double ratio = win.average() / lim_it->second;
    auto& st = oc_[branch_id];
    if (ratio > 1.0) {
      st.last_delay = oc_trip_delay(ratio);
      if (st.pickup_t < 0.0) st.pickup_t = t;
      st.scheduled_trip = st.pickup_t + st.last_delay;
    } else if (st.pickup_t >= 0.0) {
      st = OcState{};  // countdown stops
    }
  }
}

std::optional<double> RelaySystem::next_scheduled_after(double t) const {
  std::optional<double> next;
  auto consider = [&](double s) {
    if (s > t && (!next || s < *next)) next = s;
  };
  for (const auto& [id, st] : oc_)
    if (st.scheduled_trip >= 0.0) consider(st.scheduled_trip);
  for (const auto& [id, st] : uvls_)
    if (st.scheduled_shed >= 0.0) consider(st.scheduled_shed);
  return next;
}

std::vector<Event> RelaySystem::collect_due(double t) {
  std::vector<Event> out;
  for (auto& [branch_id, st] : oc_) {
    if (st.scheduled_trip >= 0.0 && st.scheduled_trip <= t + 1e-12) {
      Event e;
      e.t = t;
      e.kind = EventKind::LineTrip;
      e.targets = {branch_id};
      out.push_back(e);
      st = OcState{};
    }
  }
  for (auto& [bus_id, st] : uvls_) {
    if (st.scheduled_shed >= 0.0 && st.scheduled_shed <= t + 1e-12) {
      Event e;
      e.t = t;
      e.kind = EventKind::UvlsShed;
      e.targets = {bus_id};
      out.push_back(e);
      ++st.shed_count;
      st.violation_start = -1.0;
      st.scheduled_shed = -1.0;
    }
  }
  std::sort(out.begin(), out.end(), event_order_less);
  return out;
}

std::vector<Event> RelaySystem::check_out_of_step(double t, const IslandModel& model,
                                                  const Eigen::VectorXd& x) {
  std::vector<Event> out;
  if (model.n_mach() < 2) return out;
  for (int i = 0; i < model.n_mach(); ++i) {
    const int cm = model.machines[i].case_idx;
    const double abs_theta = std::abs(x(model.off(i, IslandModel::kTheta)));
    auto& hist = theta_hist_[cm];
    hist.emplace_back(t, abs_theta);
    while (hist.size() > 1 && hist[1].first <= t - cfg_.oos_monotone_window - 1e-12)
      hist.pop_front();
    if (abs_theta <= cfg_.out_of_step_angle_th) continue;
    if (hist.front().first > t - cfg_.oos_monotone_window + 1e-9) continue;
    bool monotone = true;
    for (std::size_t k = 1; k < hist.size(); ++k)
      monotone = monotone && hist[k].second >= hist[k - 1].second - 1e-12;
    if (!monotone) continue;
    Event e;
    e.t = t;
    e.kind = EventKind::MachineTripOos;
    e.targets = {cm};
    out.push_back(e);
    hist.clear();
  }
  std::sort(out.begin(), out.end(), event_order_less);
  return out;
}

void RelaySystem::note_event(double t) {
  oc_freeze_until_ = t + cfg_.oc_freeze_after_event;
}

void RelaySystem::retain_elements(const IslandModel& model) {
  std::vector<int> branch_ids, bus_ids, machine_ids;
  for (const auto& br : model.branches) branch_ids.push_back(br.id);
  bus_ids = model.bus_ids;
  for (const auto& mc : model.machines) machine_ids.push_back(mc.case_idx);

  auto keep = [](auto& m, const std::vector<int>& ids) {
    for (auto it = m.begin(); it != m.end();) {
      if (std::find(ids.begin(), ids.end(), it->first) == ids.end())
        it = m.erase(it);
      else
        ++it;
    }
  };
  keep(current_win_, branch_ids);
  keep(oc_, branch_ids);
  keep(limits_, branch_ids);
  keep(voltage_win_, bus_ids);
  keep(uvls_, bus_ids);
  keep(theta_hist_, machine_ids);
}

bool RelaySystem::any_violation(double horizon) const {
  for (const auto& [id, win] : current_win_) {
    auto it = limits_.find(id);
    if (it == limits_.end() || it->second <= 0.0 || win.samples.empty()) continue;
    const double ratio = win.average() / it->second;
    if (ratio > 1.0 && oc_trip_delay(ratio) <= horizon) return true;
  }
  for (const auto& [id, win] : voltage_win_) {
    if (win.samples.empty() || win.average() >= cfg_.v_th) continue;
    auto st = uvls_.find(id);
    const int count = st == uvls_.end() ? 0 : st->second.shed_count;
    if (count < cfg_.k_shed_max) return true;
  }
  return false;
}

bool RelaySystem::any_schedule() const {
  for (const auto& [id, st] : oc_)
    if (st.scheduled_trip >= 0.0) return true;
  for (const auto& [id, st] : uvls_)
    if (st.scheduled_shed >= 0.0) return true;
  return false;
}

int RelaySystem::shed_count(int bus_id) const {
  auto it = uvls_.find(bus_id);
  return it == uvls_.end() ? 0 : it->second.shed_count;
}

}  // namespace cascadesim
