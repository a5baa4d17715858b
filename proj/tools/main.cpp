#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "cascadesim/cases_builtin.hpp"
#include "cascadesim/metrics.hpp"
#include "cascadesim/runio.hpp"

using namespace cascadesim;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cmd_run(const std::string& runfile_path) {
  RunFile rf = parse_run_file(slurp(runfile_path));
  CaseDefinition c = load_case_for_run(rf);
  CascadeRun run = run_cascade(c, rf.config, rf.method);
  write_run_outputs(rf.output_dir, c, run);
  std::cout << "method " << run_method_name(run.method) << ": " << run.events.size()
            << " events, termination " << termination_name(run.termination)
            << ", demand served " << run.end_state.demand_served_mw << " / "
            << run.end_state.demand_total_mw << " MW, cascade span " << run.sim_end_time
            << " s, wall " << run.wall_seconds << " s\n";
  std::cout << "outputs written to " << rf.output_dir << "\n";
  return run.termination == Termination::NonConverged ? 2 : 0;
}

int cmd_mc(const std::string& runfile_path) {
  RunFile rf = parse_run_file(slurp(runfile_path));
  if (rf.mc.n_cases < 1) throw std::runtime_error("run file has no mc block (n_cases >= 1)");
  CaseDefinition c = load_case_for_run(rf);
  McConfig mc;
  mc.n_cases = rf.mc.n_cases;
  mc.outage_count = rf.mc.outage_count;
  mc.seed = rf.mc.seed;
  mc.run_rk4 = rf.mc.run_rk4;
  mc.rk4_min_sim_time = rf.mc.rk4_min_sim_time;
  MonteCarloSummary sum = monte_carlo(c, rf.config, mc);
  std::filesystem::create_directories(rf.output_dir);
  {
    std::ofstream out(rf.output_dir + "/mc_summary.json", std::ios::binary);
    out << mc_summary_json(sum);
  }
  {
    std::ofstream out(rf.output_dir + "/mc_curves.csv", std::ios::binary);
    out << mc_curves_csv(sum);
  }
  std::cout << "n=" << sum.cases.size() << " mean R=" << sum.mean_r
            << " median R=" << sum.median_r << " min R=" << sum.min_r
            << " median runtime ratio=" << sum.median_runtime_ratio
            << " resilient=" << sum.resilient_count << " collapsed=" << sum.collapsed_count
            << " corrected=" << sum.corrected_count << "\n";
  std::cout << "outputs written to " << rf.output_dir << "\n";
  return 0;
}

int cmd_compare(const std::string& dir_a, const std::string& dir_b) {
  LoadedRun a = load_run_outputs(dir_a);
  LoadedRun b = load_run_outputs(dir_b);
  ComparisonReport rep = end_state_compare(a, b);
  std::cout << comparison_json(rep) << "\n";
  return 0;
}

int cmd_modes(const std::string& runfile_path) {
  RunFile rf = parse_run_file(slurp(runfile_path));
  CaseDefinition c = load_case_for_run(rf);
  CascadeRun run = run_bem_pc(c, rf.config);
  std::filesystem::create_directories(rf.output_dir);
  const std::string csv = modes_csv(c, run);
  {
    std::ofstream out(rf.output_dir + "/modes.csv", std::ios::binary);
    out << csv;
  }
  std::cout << csv;
  int unstable_tiers = 0;
  for (const auto& tm : run.tier_modes)
    if (tm.settled && tm.verdict.unstable) ++unstable_tiers;
  std::cout << "# tiers analyzed: " << run.tier_modes.size()
            << ", unstable: " << unstable_tiers << ", pc rounds: " << run.pc_rounds << "\n";
  return 0;
}

int cmd_case(const std::string& name, const std::string& out_path, unsigned long long seed,
             bool synthesize) {
  CaseDefinition c = make_builtin_case(name);
  if (synthesize) c = synthesize_dynamics(c, seed);
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + out_path);
  out << serialize_case(c);
  std::cout << "wrote " << out_path << " (" << c.buses.size() << " buses, "
            << c.branches.size() << " branches, " << c.machines.size() << " machines)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cascadesim - cascading-failure dynamic simulation engine"};
  app.require_subcommand(1);

  std::string runfile, dir_a, dir_b, case_name, out_path = "case.json";
  unsigned long long seed = 1;
  bool synth = false;

  auto* run_cmd = app.add_subcommand("run", "simulate one cascade from a run file");
  run_cmd->add_option("runfile", runfile, "run file (JSON)")->required();

  auto* mc_cmd = app.add_subcommand("mc", "Monte-Carlo study from a run file with an mc block");
  mc_cmd->add_option("runfile", runfile, "run file (JSON)")->required();

  auto* cmp_cmd = app.add_subcommand("compare", "compare two run output directories");
  cmp_cmd->add_option("runA", dir_a, "reference run directory")->required();
  cmp_cmd->add_option("runB", dir_b, "candidate run directory")->required();

  auto* modes_cmd = app.add_subcommand("modes", "predictor mode report for a run file");
  modes_cmd->add_option("runfile", runfile, "run file (JSON)")->required();

  auto* case_cmd = app.add_subcommand("case", "emit a builtin case file");
  case_cmd->add_option("name", case_name, "two_bus|smib|nine_bus|two_cluster|ring39")
      ->required();
  case_cmd->add_option("-o,--out", out_path, "output path");
  case_cmd->add_option("--seed", seed, "synthesis seed");
  case_cmd->add_flag("--synthesize", synth, "fill dynamic parameters");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) return cmd_run(runfile);
    if (*mc_cmd) return cmd_mc(runfile);
    if (*cmp_cmd) return cmd_compare(dir_a, dir_b);
    if (*modes_cmd) return cmd_modes(runfile);
    if (*case_cmd) return cmd_case(case_name, out_path, seed, synth);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
