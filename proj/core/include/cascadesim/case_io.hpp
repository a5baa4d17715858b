#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cascadesim/config.hpp"

namespace cascadesim {

enum class BusKind { Slack, PV, PQ };

struct BusRecord {
  int id = 0;
  BusKind kind = BusKind::PQ;
  double p_load_mw = 0.0;
  double q_load_mvar = 0.0;
  double g_shunt = 0.0;   // pu on system base
  double b_shunt = 0.0;   // pu
  double base_kv = 138.0;
  double vm0 = 1.0;       // pu initial guess / setpoint
  double va0_deg = 0.0;
};

struct BranchRecord {
  int id = 0;
  int from_bus = 0;
  int to_bus = 0;
  double r = 0.0;          // pu
  double x = 0.0;          // pu
  double b_charging = 0.0; // pu total line charging
  double current_limit = 1e9;  // pu, OC relay heating limit I_c
  bool in_service = true;
};

struct GovernorParams {
  double r_droop = 0.05;  // pu speed droop
  double t_g = 0.5;       // s
};

struct ExciterParams {
  double k_a = 100.0;
  double t_a = 0.02;      // s
  double efd_min = 0.0;   // pu
  double efd_max = 6.0;   // pu
};

/// Fourth-order machine data plus first-order exciter/governor. Reactances are
/// stored on the system base. Condensers carry no governor block.
struct MachineParams {
  int bus = 0;
  double rating_mva = 100.0;
  double p_set_mw = 0.0;   // dispatch from case data / power flow
  double v_set = 1.0;      // pu terminal voltage setpoint
  bool is_condenser = false;

  double h = 0.0;          // s, inertia on system base
  double d = 0.0;          // pu damping
  double xd = 0.0, xq = 0.0, xdp = 0.0, xqp = 0.0;  // pu
  double tdop = 0.0, tqop = 0.0;                    // s
  std::optional<GovernorParams> governor;
  ExciterParams exciter;
  bool has_dynamics = false;  // false until synthesize_dynamics or explicit data
};

struct CaseDefinition {
  std::string name;
  double base_mva = 100.0;
  double f_nominal = 60.0;
  std::vector<BusRecord> buses;
  std::vector<BranchRecord> branches;
  std::vector<MachineParams> machines;
  RelayConfig relays;

  int bus_index(int bus_id) const;  // -1 when absent
  double total_load_mw() const;
};

struct ParseError : std::runtime_error {
  ParseError(const std::string& msg, int line = -1, std::string field = {})
      : std::runtime_error(make(msg, line, field)), line(line), field(std::move(field)) {}
  int line;
  std::string field;

 private:
  static std::string make(const std::string& msg, int line, const std::string& field);
};

struct SemanticError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Parse a case from text. A leading '{' selects the native JSON schema,
/// anything else is treated as the legacy whitespace-separated table format
/// (bus/branch/gen matrices). Electrical quantities are converted to per-unit
/// on the case base.
CaseDefinition parse_case(std::string_view text);

/// Serialize to the native JSON schema. parse(serialize(c)) == c.
std::string serialize_case(const CaseDefinition& c);

/// Damping overrides keyed by machine index (position in machines[]).
using DampingOverrides = std::map<int, double>;

/// Fill machine dynamic parameters from documented physical ranges,
/// deterministically from (case, seed, overrides). H scales with the machine
/// MVA rating; reactances are converted from the machine base to system base.
CaseDefinition synthesize_dynamics(const CaseDefinition& c, unsigned long long seed,
                                   const DampingOverrides& damping_overrides = {});

}  // namespace cascadesim
