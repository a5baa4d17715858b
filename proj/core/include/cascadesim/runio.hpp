#pragma once

#include <optional>
#include <string>

#include "cascadesim/case_io.hpp"
#include "cascadesim/engine.hpp"

namespace cascadesim {

/// Monte-Carlo block of a run file.
struct McSpec {
  int n_cases = 0;
  int outage_count = 2;
  unsigned long long seed = 0;
  bool run_rk4 = false;
  double rk4_min_sim_time = 30.0;  // s, RK4 only re-run on cases at least this long
};

/// Parsed run file: case source, method, engine configuration, outputs.
struct RunFile {
  std::string case_path;  // file path or "builtin:<name>"
  RunMethod method = RunMethod::BEMPC;
  RunConfig config;
  std::optional<unsigned long long> synth_seed;
  DampingOverrides damping_overrides;
  std::string output_dir = ".";
  McSpec mc;
};

RunFile parse_run_file(const std::string& json_text);

/// Load, synthesize (when a seed is given or dynamics are missing) and
/// return the case a run file points at.
CaseDefinition load_case_for_run(const RunFile& rf);

std::string event_log_jsonl(const CascadeRun& run);
std::string end_state_json(const CaseDefinition& c, const CascadeRun& run);
std::string tier_timeline_csv(const CaseDefinition& c, const CascadeRun& run);
std::string modes_csv(const CaseDefinition& c, const CascadeRun& run, int top_k = 5);

/// Writes events.jsonl, end_state.json and timeline.csv (plus modes.csv for
/// BEM-PC runs) under dir, creating it if needed.
void write_run_outputs(const std::string& dir, const CaseDefinition& c, const CascadeRun& run);

/// Minimal view of a finished run reloaded from an output directory, enough
/// for comparisons.
struct LoadedRun {
  std::vector<Event> events;
  EndState end_state;
  Termination termination = Termination::Settled;
  double wall_seconds = 0.0;
  double sim_end_time = 0.0;
  std::string method;
  std::string case_name;
};

LoadedRun load_run_outputs(const std::string& dir);
LoadedRun view_of(const CaseDefinition& c, const CascadeRun& run);

}  // namespace cascadesim
