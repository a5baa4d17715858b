#pragma once

#include <string>

#include "cascadesim/case_io.hpp"

namespace cascadesim {

/// Two buses, one branch: slack machine at bus 1, load at bus 2.
CaseDefinition make_two_bus_case(double p_load_mw = 100.0, double q_load_mvar = 0.0,
                                 double x_pu = 0.1);

/// One machine against a stiff source over a double-circuit line. The source
/// is a very large rating machine, so its internal bus barely moves.
CaseDefinition make_smib_case();

/// Classic 3-machine, 9-bus test network.
CaseDefinition make_nine_bus_case();

/// Two 5-bus clusters, two machines each, joined by a single tie line
/// (branch id 100). Cutting the tie yields two viable islands.
CaseDefinition make_two_cluster_case();

/// 39-bus class synthetic system: 29-bus load ring with chords and ten
/// machines on step-up branches. OC limits are calibrated against the solved
/// base-case flows so cascades can propagate after node outages.
CaseDefinition make_ring39_case();

/// ring39 variant for hyperstability studies: the units at machine indices
/// 3 and 7 carry a small dispatch so special-protection trips of the pair
/// are absorbable by the remaining units.
CaseDefinition make_ring39_hyper_case();

/// Legacy table-format text at 118-bus scale (118 buses, 186 branches,
/// 54 in-service generators).
std::string make_grid118_table_text();

/// Lookup by name used by the CLI `case` subcommand:
/// two_bus | smib | nine_bus | two_cluster | ring39 | ring39_hyper.
CaseDefinition make_builtin_case(const std::string& name);

}  // namespace cascadesim
