#pragma once

#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "cascadesim/coi.hpp"
#include "cascadesim/config.hpp"
#include "cascadesim/dae.hpp"
#include "cascadesim/integrators.hpp"
#include "cascadesim/modal.hpp"
#include "cascadesim/protection.hpp"

namespace cascadesim {

enum class RunMethod { TM, BEM, BEMPC, RK4 };

const char* run_method_name(RunMethod m);
RunMethod run_method_from_name(const std::string& name);

/// Growing-oscillation detector driving the measurement-based SPS of the
/// ground-truth runs: consecutive growing peak-to-peak machine-speed cycles.
struct GroundTruthSpsConfig {
  double block_seconds = 2.0;  // tumbling-block length for the speed envelope
  double growth_ratio = 1.05;  // required block-over-block envelope growth
  int blocks = 3;              // consecutive growing blocks
  double amp_floor = 1e-3;     // pu, smallest envelope that can fire it
  double rearm_hold = 5.0;     // s of suppression after a firing
};

struct OutageSpec {
  std::vector<int> explicit_buses;
  std::vector<int> explicit_branches;  // initial line outages
  int random_count = 0;  // node outages sampled when both lists are empty
  unsigned long long seed = 0;
};

struct RunConfig {
  IntegratorConfig integ;
  RelayConfig relays;
  bool use_case_relays = true;  // take relay settings from the case file
  PcConfig pc;
  StopConfig stop;
  GroundTruthSpsConfig gt_sps;
  double t_outage = 3.0;
  OutageSpec outages;
};

enum class Termination { Settled, Collapsed, NonConverged };
const char* termination_name(Termination t);

struct BusEnd {
  int id = 0;
  bool energized = false;
  double vm = 0.0;       // pu
  double va_deg = 0.0;   // island COI frame
  double freq_hz = 0.0;  // island frequency
};

struct EndState {
  std::vector<BusEnd> buses;        // case order
  std::vector<char> machine_connected;  // case order, island-energized included
  std::vector<char> branch_in;          // case order
  double demand_served_mw = 0.0;
  double demand_total_mw = 0.0;
};

struct RuntimeBreakdown {
  double a = 0.0;   // cascade stepping
  double b1 = 0.0;  // predictor equilibrium runs
  double b2 = 0.0;  // A-matrix assembly
  double b3 = 0.0;  // eigendecomposition
};

/// One island simulation context. Copyable by value; a copy is a restartable
/// snapshot (state, topology view, relay bookkeeping, stepper control).
struct IslandSim {
  int id = 0;
  std::vector<int> ancestry;  // ancestor island ids, oldest first
  TopologyState topo;
  IslandModel model;
  SystemState state;
  RelaySystem relays;
  double t = 0.0;
  double birth_t = 0.0;
  double last_event_t = 0.0;
  double dt_next = 0.002;
  int fixed_left = 0;
  int event_dt_fail_streak = 0;
  enum class St { Running, Settled, Collapsed } status = St::Running;
  std::deque<std::pair<double, Eigen::VectorXd>> speed_hist;
  std::vector<Event> pending;  // island-local scheduled actions
  // measurement-based SPS detector bookkeeping (per machine case idx):
  // tumbling-block envelope of the relative speed
  struct EnvelopeBlock {
    double t0 = -1.0;
    double lo = 0.0, hi = 0.0;
    std::deque<double> amps;  // completed block amplitudes
  };
  std::map<int, EnvelopeBlock> sps_det;
  double sps_suppress_until = -1.0;
};

struct TierRecord {
  int index = 0;  // position in tier order
  double t = 0.0;
  int island_id = 0;
  std::vector<int> ancestry;
  IslandSim snapshot;  // post-event state, restartable
};

struct TierModes {
  int tier_index = -1;
  double t = 0.0;
  int island_id = 0;
  bool analyzed = false;
  bool settled = false;
  InstabilityVerdict verdict;
};

struct CascadeRun {
  RunMethod method = RunMethod::TM;
  std::vector<Event> events;  // merged, ordered by (t, island, kind, targets)
  std::vector<TierRecord> tiers;
  std::vector<TierModes> tier_modes;  // BEM-PC predictor outputs
  EndState end_state;
  Termination termination = Termination::Settled;
  double sim_end_time = 0.0;
  double wall_seconds = 0.0;
  RuntimeBreakdown breakdown;
  int pc_rounds = 1;
  bool pc_round_cap_hit = false;
  double lambda_shed_used = 0.25;  // effective relay shed fraction of the run
};

/// Ground truth: variable-step TM with all relays and the measurement-based
/// SPS detector.
CascadeRun run_tm_ground_truth(const CaseDefinition& c, const RunConfig& cfg);

/// Plain BEM (subprocess (a) alone): relays active, no SPS of any kind.
CascadeRun run_bem_plain(const CaseDefinition& c, const RunConfig& cfg);

/// BEM with the predictor-corrector loop: settle each tier, eigenanalyze,
/// schedule the functional SPS and restart from the unstable tier until no
/// instability is detected.
CascadeRun run_bem_pc(const CaseDefinition& c, const RunConfig& cfg);

/// Fixed-step partitioned RK4 comparator with the ground-truth SPS.
CascadeRun run_rk4_partitioned(const CaseDefinition& c, const RunConfig& cfg);

CascadeRun run_cascade(const CaseDefinition& c, const RunConfig& cfg, RunMethod method);

/// Resolved node outages for a spec (samples deterministically when the
/// explicit list is empty).
std::vector<int> resolve_outage_buses(const CaseDefinition& c, const OutageSpec& spec);

/// Stop-rule scan used by the engine, exposed for tests: returns "continue",
/// "settled" or "collapsed" for one island.
enum class StopVerdict { Continue, Settled, Collapsed };
StopVerdict check_stop(const IslandSim& isl, const StopConfig& stop, double global_pending_t);

}  // namespace cascadesim
