#pragma once

#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cascadesim/config.hpp"
#include "cascadesim/dae.hpp"

namespace cascadesim {

enum class EventKind {
  InitialNodeOutage,
  InitialLineOutage,
  LineTrip,
  UvlsShed,
  MachineTripOos,
  SpsTrip,
  SpsLineTrip,
  IslandSplit,
};

const char* event_kind_name(EventKind k);

/// A discontinuity. Targets are element ids: bus ids for node outages and
/// splits, branch ids for line trips, case machine indices for machine trips.
struct Event {
  double t = 0.0;
  EventKind kind = EventKind::LineTrip;
  std::vector<int> targets;
  int tier = -1;
  int island = -1;
};

/// Total order for equal-time tiebreaks: kind first, then targets.
bool event_order_less(const Event& a, const Event& b);

/// Inverse-time overcurrent delay; valid only above pickup (ratio > 1).
double oc_trip_delay(double current_ratio);

/// Pure element-status mutation of one event. Sheds are handled by
/// apply_shed_to_topology since the fraction comes from the relay config;
/// island_split events are informational and mutate nothing.
void apply_event_to_topology(const CaseDefinition& c, TopologyState& topo, const Event& e);
void apply_shed_to_topology(const CaseDefinition& c, TopologyState& topo, const Event& e,
                            double lambda_shed);

/// Replay a full event log over a fresh all-in topology; the log fully
/// determines element statuses and shed fractions.
TopologyState replay_events(const CaseDefinition& c, const std::vector<Event>& events,
                            double lambda_shed);

struct OcState {
  double pickup_t = -1.0;
  double scheduled_trip = -1.0;
  double last_delay = -1.0;
};

struct UvlsState {
  double violation_start = -1.0;
  double scheduled_shed = -1.0;
  int shed_count = 0;
};

/// Relay bank of one island: windowed measurements on a fixed grid plus
/// per-element trip bookkeeping. Owned by a single simulation run.
class RelaySystem {
 public:
  RelaySystem() = default;
  RelaySystem(const RelayConfig& cfg, double t_birth);

  /// Push one measurement-grid sample (branch current magnitudes aligned
  /// with model.branches, bus voltage magnitudes aligned with model.bus_ids)
  /// and run the UVLS logic plus any whole-second OC evaluations at t.
  void ingest_sample(double t, const IslandModel& model, const Eigen::VectorXd& current_mags,
                     const Eigen::VectorXd& voltage_mags);

  /// Earliest scheduled relay action strictly after t, if any.
  std::optional<double> next_scheduled_after(double t) const;

  /// Relay events due at or before t (trip schedules that expired inside the
  /// step just taken). Event times are clamped to t to stay causal.
  std::vector<Event> collect_due(double t);

  /// Out-of-step screening on an accepted step: |theta| above threshold
  /// after monotone growth across the trailing window.
  std::vector<Event> check_out_of_step(double t, const IslandModel& model,
                                       const Eigen::VectorXd& x);

  /// An event happened: freeze OC delay updates for the configured hold.
  void note_event(double t);

  /// Drop bookkeeping for elements that left the island and cancel
  /// schedules that reference them.
  void retain_elements(const IslandModel& model);

  /// True when a relay action is anticipated within the horizon: an OC
  /// average above pickup whose inverse-time delay lands inside it, or a
  /// UVLS average below threshold at a bus that can still shed.
  bool any_violation(double horizon = 1e30) const;

  bool any_schedule() const;

  int shed_count(int bus_id) const;
  const RelayConfig& config() const { return cfg_; }

 private:
  void evaluate_oc(double t);

  RelayConfig cfg_;
  double oc_freeze_until_ = -1.0;
  double next_oc_eval_ = 1.0;

  struct Window {
    std::deque<std::pair<double, double>> samples;
    double sum = 0.0;
    void push(double t, double v, double span);
    double average() const;
    bool full(double span, double grid_dt) const;  // sample count covers span
  };

  std::map<int, Window> current_win_;  // branch id -> |I| window
  std::map<int, Window> voltage_win_;  // bus id -> |V| window
  std::map<int, OcState> oc_;
  std::map<int, UvlsState> uvls_;
  std::map<int, std::deque<std::pair<double, double>>> theta_hist_;  // machine -> |theta|
  std::map<int, double> limits_;  // branch id -> I_c
  double birth_t_ = 0.0;
};

}  // namespace cascadesim
