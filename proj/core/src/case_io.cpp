#include "cascadesim/case_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>
#include <sstream>

#include <json.hpp>

namespace cascadesim {

using nlohmann::json;

std::string ParseError::make(const std::string& msg, int line, const std::string& field) {
  std::ostringstream os;
  os << "parse error";
  if (line >= 0) os << " at line " << line;
  if (!field.empty()) os << " (field " << field << ")";
  os << ": " << msg;
  return os.str();
}

int CaseDefinition::bus_index(int bus_id) const {
  for (std::size_t i = 0; i < buses.size(); ++i)
    if (buses[i].id == bus_id) return static_cast<int>(i);
  return -1;
}

double CaseDefinition::total_load_mw() const {
  double s = 0.0;
  for (const auto& b : buses) s += b.p_load_mw;
  return s;
}

namespace {

BusKind bus_kind_from_string(const std::string& s) {
  if (s == "slack") return BusKind::Slack;
  if (s == "pv" || s == "PV") return BusKind::PV;
  if (s == "pq" || s == "PQ") return BusKind::PQ;
  throw ParseError("unknown bus kind '" + s + "'", -1, "kind");
}

const char* bus_kind_to_string(BusKind k) {
  switch (k) {
    case BusKind::Slack: return "slack";
    case BusKind::PV: return "pv";
    default: return "pq";
  }
}

void check_semantics(const CaseDefinition& c) {
  if (c.base_mva <= 0) throw SemanticError("base_mva must be positive");
  if (c.f_nominal <= 0) throw SemanticError("f_nominal must be positive");
  for (const auto& b : c.buses) {
    if (b.vm0 <= 0) throw SemanticError("bus " + std::to_string(b.id) + ": vm0 must be > 0");
    if (!std::isfinite(b.p_load_mw) || !std::isfinite(b.q_load_mvar))
      throw SemanticError("bus " + std::to_string(b.id) + ": non-finite load");
  }
  for (const auto& br : c.branches) {
    if (c.bus_index(br.from_bus) < 0)
      throw SemanticError("branch " + std::to_string(br.id) + ": from_bus " +
                          std::to_string(br.from_bus) + " not in bus table");
    if (c.bus_index(br.to_bus) < 0)
      throw SemanticError("branch " + std::to_string(br.id) + ": to_bus " +
                          std::to_string(br.to_bus) + " not in bus table");
    if (br.from_bus == br.to_bus)
      throw SemanticError("branch " + std::to_string(br.id) + ": from_bus == to_bus");
    if (br.r == 0.0 && br.x == 0.0)
      throw SemanticError("branch " + std::to_string(br.id) + ": zero impedance");
    if (br.current_limit <= 0)
      throw SemanticError("branch " + std::to_string(br.id) + ": current_limit must be > 0");
  }
  for (const auto& m : c.machines) {
    if (c.bus_index(m.bus) < 0)
      throw SemanticError("machine at bus " + std::to_string(m.bus) + " not in bus table");
    if (m.has_dynamics) {
      if (m.h <= 0) throw SemanticError("machine at bus " + std::to_string(m.bus) + ": H <= 0");
      if (m.tdop <= 0 || m.tqop <= 0)
        throw SemanticError("machine at bus " + std::to_string(m.bus) + ": time constant <= 0");
      if (!(m.xd >= m.xdp && m.xdp > 0) || !(m.xq >= m.xqp && m.xqp > 0))
        throw SemanticError("machine at bus " + std::to_string(m.bus) + ": reactance ordering");
      if (m.is_condenser && m.governor)
        throw SemanticError("machine at bus " + std::to_string(m.bus) +
                            ": condenser must not carry a governor");
    }
  }
}

RelayConfig relays_from_json(const json& j) {
  RelayConfig r;
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
  return r;
}

json relays_to_json(const RelayConfig& r) {
  json j;
  j["t_w_oc"] = r.t_w_oc;
  j["t_w_uvls"] = r.t_w_uvls;
  j["t_tp_uvls"] = r.t_tp_uvls;
  j["lambda_shed"] = r.lambda_shed;
  j["v_th"] = r.v_th;
  j["k_shed_max"] = r.k_shed_max;
  j["oc_freeze_after_event"] = r.oc_freeze_after_event;
  j["out_of_step_angle_th"] = r.out_of_step_angle_th;
  j["oos_monotone_window"] = r.oos_monotone_window;
  j["sps_delay"] = r.sps_delay;
  j["sps_machine_count"] = r.sps_machine_count;
  if (r.sps_line_branch) j["sps_line_branch"] = *r.sps_line_branch;
  j["measurement_dt"] = r.measurement_dt;
  return j;
}

CaseDefinition parse_native_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(e.what(), static_cast<int>(e.byte));
  }
  CaseDefinition c;
  try {
    c.name = j.value("name", "");
    c.base_mva = j.at("base_mva").get<double>();
    c.f_nominal = j.value("f_nominal", 60.0);
    for (const auto& jb : j.at("buses")) {
      BusRecord b;
      b.id = jb.at("id").get<int>();
      b.kind = bus_kind_from_string(jb.value("kind", "pq"));
      b.p_load_mw = jb.value("p_load_mw", 0.0);
      b.q_load_mvar = jb.value("q_load_mvar", 0.0);
      b.g_shunt = jb.value("g_shunt", 0.0);
      b.b_shunt = jb.value("b_shunt", 0.0);
      b.base_kv = jb.value("base_kv", 138.0);
      b.vm0 = jb.value("vm0", 1.0);
      b.va0_deg = jb.value("va0_deg", 0.0);
      c.buses.push_back(b);
    }
    for (const auto& jb : j.at("branches")) {
      BranchRecord br;
      br.id = jb.at("id").get<int>();
      br.from_bus = jb.at("from").get<int>();
      br.to_bus = jb.at("to").get<int>();
      br.r = jb.value("r", 0.0);
      br.x = jb.at("x").get<double>();
      br.b_charging = jb.value("b", 0.0);
      br.current_limit = jb.value("current_limit", 1e9);
      br.in_service = jb.value("status", std::string("in")) == "in";
      c.branches.push_back(br);
    }
    for (const auto& jm : j.value("machines", json::array())) {
      MachineParams m;
      m.bus = jm.at("bus").get<int>();
      m.rating_mva = jm.value("rating_mva", c.base_mva);
      m.p_set_mw = jm.value("p_set_mw", 0.0);
      m.v_set = jm.value("v_set", 1.0);
      m.is_condenser = jm.value("is_condenser", false);
      if (jm.contains("h")) {
        m.has_dynamics = true;
        m.h = jm.at("h").get<double>();
        m.d = jm.value("d", 0.0);
        m.xd = jm.at("xd").get<double>();
        m.xq = jm.at("xq").get<double>();
        m.xdp = jm.at("xdp").get<double>();
        m.xqp = jm.at("xqp").get<double>();
        m.tdop = jm.at("tdop").get<double>();
        m.tqop = jm.at("tqop").get<double>();
        if (jm.contains("governor") && !jm["governor"].is_null()) {
          GovernorParams g;
          g.r_droop = jm["governor"].value("r_droop", g.r_droop);
          g.t_g = jm["governor"].value("t_g", g.t_g);
          m.governor = g;
        }
        if (jm.contains("exciter") && !jm["exciter"].is_null()) {
          m.exciter.k_a = jm["exciter"].value("k_a", m.exciter.k_a);
          m.exciter.t_a = jm["exciter"].value("t_a", m.exciter.t_a);
          m.exciter.efd_min = jm["exciter"].value("efd_min", m.exciter.efd_min);
          m.exciter.efd_max = jm["exciter"].value("efd_max", m.exciter.efd_max);
        }
      }
      c.machines.push_back(m);
    }
    if (j.contains("relays")) c.relays = relays_from_json(j["relays"]);
  } catch (const json::exception& e) {
    throw ParseError(e.what());
  }
  check_semantics(c);
  return c;
}

// Legacy table format: MATPOWER-style matrices. Only the standard bus/branch/
// gen columns are imported; taps, shifts and area data are ignored.
struct TableSection {
  std::vector<std::vector<double>> rows;
};

std::map<std::string, TableSection> split_table_sections(std::string_view text,
                                                         double& base_mva) {
  std::map<std::string, TableSection> sections;
  std::istringstream is{std::string(text)};
  std::string line;
  std::string current;
  int lineno = 0;
  base_mva = 100.0;
  while (std::getline(is, line)) {
    ++lineno;
    auto cpos = line.find('%');
    if (cpos != std::string::npos) line.erase(cpos);
    auto fpos = line.find("function");
    if (fpos != std::string::npos) continue;
    auto bpos = line.find("baseMVA");
    if (bpos != std::string::npos) {
      auto eq = line.find('=', bpos);
      if (eq != std::string::npos) {
        std::string v = line.substr(eq + 1);
        std::erase(v, ';');
        try {
          base_mva = std::stod(v);
        } catch (...) {
          throw ParseError("bad baseMVA value", lineno);
        }
      }
      continue;
    }
    for (const char* key : {"bus", "gen", "branch"}) {
      std::string marker = std::string(".") + key;
      auto mpos = line.find(marker + " ");
      if (mpos == std::string::npos) mpos = line.find(marker + "=");
      if (mpos != std::string::npos && line.find('[') != std::string::npos) {
        current = key;
        line = line.substr(line.find('[') + 1);
        break;
      }
    }
    if (current.empty()) continue;
    bool closes = line.find(']') != std::string::npos;
    if (closes) line.erase(line.find(']'));
    std::replace(line.begin(), line.end(), ';', ' ');
    std::istringstream ls(line);
    std::vector<double> row;
    double v;
    while (ls >> v) row.push_back(v);
    if (!row.empty()) sections[current].rows.push_back(row);
    if (closes) current.clear();
  }
  return sections;
}

CaseDefinition parse_legacy_table(std::string_view text) {
  double base_mva = 100.0;
  auto sections = split_table_sections(text, base_mva);
  if (!sections.count("bus")) throw ParseError("missing bus table");
  if (!sections.count("branch")) throw ParseError("missing branch table");
  CaseDefinition c;
  c.base_mva = base_mva;
  for (const auto& row : sections["bus"].rows) {
    if (row.size() < 10) throw ParseError("bus row too short");
    BusRecord b;
    b.id = static_cast<int>(row[0]);
    int type = static_cast<int>(row[1]);
    b.kind = type == 3 ? BusKind::Slack : (type == 2 ? BusKind::PV : BusKind::PQ);
    b.p_load_mw = row[2];
    b.q_load_mvar = row[3];
    b.g_shunt = row[4] / base_mva;
    b.b_shunt = row[5] / base_mva;
    b.vm0 = row[7];
    b.va0_deg = row[8];
    b.base_kv = row[9];
    c.buses.push_back(b);
  }
  int branch_id = 0;
  for (const auto& row : sections["branch"].rows) {
    if (row.size() < 11) throw ParseError("branch row too short");
    BranchRecord br;
    br.id = ++branch_id;
    br.from_bus = static_cast<int>(row[0]);
    br.to_bus = static_cast<int>(row[1]);
    br.r = row[2];
    br.x = row[3];
    br.b_charging = row[4];
    br.current_limit = row[5] > 0 ? row[5] / base_mva : 1e9;  // RATE_A in MVA
    br.in_service = row[10] != 0.0;
    c.branches.push_back(br);
  }
  if (sections.count("gen")) {
    for (const auto& row : sections["gen"].rows) {
      if (row.size() < 8) throw ParseError("gen row too short");
      if (row[7] <= 0) continue;  // out-of-service unit
      MachineParams m;
      m.bus = static_cast<int>(row[0]);
      m.p_set_mw = row[1];
      m.v_set = row[5] > 0 ? row[5] : 1.0;
      m.rating_mva = row[6] > 0 ? row[6] : base_mva;
      c.machines.push_back(m);
    }
  }
  check_semantics(c);
  return c;
}

}  // namespace

CaseDefinition parse_case(std::string_view text) {
  auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) throw ParseError("empty case text");
  if (text[first] == '{') return parse_native_json(text);
  return parse_legacy_table(text);
}

std::string serialize_case(const CaseDefinition& c) {
  json j;
  if (!c.name.empty()) j["name"] = c.name;
  j["base_mva"] = c.base_mva;
  j["f_nominal"] = c.f_nominal;
  j["buses"] = json::array();
  for (const auto& b : c.buses) {
    json jb;
    jb["id"] = b.id;
    jb["kind"] = bus_kind_to_string(b.kind);
    jb["p_load_mw"] = b.p_load_mw;
    jb["q_load_mvar"] = b.q_load_mvar;
    jb["g_shunt"] = b.g_shunt;
    jb["b_shunt"] = b.b_shunt;
    jb["base_kv"] = b.base_kv;
    jb["vm0"] = b.vm0;
    jb["va0_deg"] = b.va0_deg;
    j["buses"].push_back(jb);
  }
  j["branches"] = json::array();
  for (const auto& br : c.branches) {
    json jb;
    jb["id"] = br.id;
    jb["from"] = br.from_bus;
    jb["to"] = br.to_bus;
    jb["r"] = br.r;
    jb["x"] = br.x;
    jb["b"] = br.b_charging;
    jb["current_limit"] = br.current_limit;
    jb["status"] = br.in_service ? "in" : "out";
    j["branches"].push_back(jb);
  }
  j["machines"] = json::array();
  for (const auto& m : c.machines) {
    json jm;
    jm["bus"] = m.bus;
    jm["rating_mva"] = m.rating_mva;
    jm["p_set_mw"] = m.p_set_mw;
    jm["v_set"] = m.v_set;
    jm["is_condenser"] = m.is_condenser;
    if (m.has_dynamics) {
      jm["h"] = m.h;
      jm["d"] = m.d;
      jm["xd"] = m.xd;
      jm["xq"] = m.xq;
      jm["xdp"] = m.xdp;
      jm["xqp"] = m.xqp;
      jm["tdop"] = m.tdop;
      jm["tqop"] = m.tqop;
      if (m.governor) {
        jm["governor"] = {{"r_droop", m.governor->r_droop}, {"t_g", m.governor->t_g}};
      } else {
        jm["governor"] = nullptr;
      }
      jm["exciter"] = {{"k_a", m.exciter.k_a},
                       {"t_a", m.exciter.t_a},
                       {"efd_min", m.exciter.efd_min},
                       {"efd_max", m.exciter.efd_max}};
    }
    j["machines"].push_back(jm);
  }
  j["relays"] = relays_to_json(c.relays);
  return j.dump(2);
}

CaseDefinition synthesize_dynamics(const CaseDefinition& c, unsigned long long seed,
                                   const DampingOverrides& damping_overrides) {
  CaseDefinition out = c;
  std::mt19937_64 rng(seed);
  auto draw = [&rng](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  for (std::size_t i = 0; i < out.machines.size(); ++i) {
    auto& m = out.machines[i];
    double ratio = m.rating_mva / out.base_mva;  // machine -> system base
    double h_machine = draw(2.5, 6.5);
    m.h = h_machine * ratio;
    m.d = draw(0.0, 2.0);
    m.xd = draw(1.0, 2.3) / ratio;
    m.xdp = draw(0.15, 0.4) / ratio;
    m.xq = 0.9 * m.xd;
    m.xqp = m.xdp;
    m.tdop = draw(4.0, 9.0);
    m.tqop = draw(0.5, 1.5);
    m.exciter.k_a = draw(50.0, 200.0);
    m.exciter.t_a = 0.02;
    m.exciter.efd_min = 0.0;
    m.exciter.efd_max = 6.0;
    if (m.is_condenser) {
      m.governor.reset();
      double tg_discard = draw(0.2, 0.7);
      (void)tg_discard;  // keep the draw sequence machine-count stable
    } else {
      GovernorParams g;
      g.r_droop = 0.05;
      g.t_g = draw(0.2, 0.7);
      m.governor = g;
    }
    m.has_dynamics = true;
  }
  for (const auto& [idx, dval] : damping_overrides) {
    if (idx < 0 || idx >= static_cast<int>(out.machines.size()))
      throw SemanticError("damping override index out of range: " + std::to_string(idx));
    out.machines[idx].d = dval;
  }
  check_semantics(out);
  return out;
}

}  // namespace cascadesim
