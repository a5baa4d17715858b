#pragma once

#include <utility>

#include "cascadesim/cases_builtin.hpp"
#include "cascadesim/dae.hpp"
#include "cascadesim/network.hpp"
#include "cascadesim/power_flow.hpp"

namespace cascadesim::testsupport {

struct InitializedSystem {
  CaseDefinition case_def;
  TopologyState topo;
  IslandModel model;
  SystemState state;
};

/// Synthesized, power-flow-initialized single-island system.
inline InitializedSystem init_system(CaseDefinition c, unsigned long long seed = 42,
                                     const DampingOverrides& overrides = {}) {
  InitializedSystem s;
  s.case_def = synthesize_dynamics(c, seed, overrides);
  s.topo = TopologyState::all_in(s.case_def);
  auto part = find_islands(s.case_def, s.topo);
  auto pf = solve_power_flow(s.case_def);
  if (!pf.converged) throw std::runtime_error("fixture power flow did not converge");
  auto islands = initialize_islands(s.case_def, s.topo, part, pf);
  if (islands.size() != 1) throw std::runtime_error("fixture expects one island");
  s.model = std::move(islands[0].first);
  s.state = std::move(islands[0].second);
  return s;
}

inline InitializedSystem init_nine_bus(unsigned long long seed = 42) {
  return init_system(make_nine_bus_case(), seed);
}

}  // namespace cascadesim::testsupport
