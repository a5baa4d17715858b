#pragma once

#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "cascadesim/case_io.hpp"
#include "cascadesim/config.hpp"
#include "cascadesim/network.hpp"
#include "cascadesim/power_flow.hpp"

namespace cascadesim {

/// One machine inside an island, parameters on the system base plus the
/// setpoints frozen at initialization.
struct MachineRuntime {
  int case_idx = -1;
  int local_bus = -1;
  double h = 0, d = 0;
  double xd = 0, xq = 0, xdp = 0, xqp = 0;
  double tdop = 1, tqop = 1;
  bool is_condenser = false;
  bool has_governor = false;
  double r_droop = 0.05, t_g = 0.5;
  double k_a = 100, t_a = 0.02, efd_min = 0, efd_max = 6;
  double v_ref = 1.0, p_ref = 0.0;
};

struct IslandBranchRef {
  int id = 0;  // case branch id
  int from_local = 0, to_local = 0;
  std::complex<double> y_series;
  double b_half = 0.0;
  double current_limit = 1e9;
};

/// Electrical model of one island in its own COI frame. Load vectors carry
/// the shed fractions already applied.
struct IslandModel {
  double base_mva = 100.0;
  double f_nominal = 60.0;
  double omega_s = 2.0 * 3.14159265358979323846 * 60.0;
  std::vector<int> bus_ids;  // local -> global bus id
  std::unordered_map<int, int> bus_local;
  std::vector<MachineRuntime> machines;
  std::vector<IslandBranchRef> branches;
  Eigen::VectorXd p_load, q_load;  // pu, effective
  AdmittanceMatrix adm;
  double h_total = 0.0;

  int n_bus() const { return static_cast<int>(bus_ids.size()); }
  int n_mach() const { return static_cast<int>(machines.size()); }
  int n_diff() const { return 6 * n_mach() + 2; }
  int n_alg() const { return 2 * n_bus(); }

  // per-machine state layout
  static constexpr int kEqp = 0, kEdp = 1, kTheta = 2, kDw = 3, kEfd = 4, kPm = 5;
  int off(int m, int comp) const { return 6 * m + comp; }
  int off_delta_coi() const { return 6 * n_mach(); }
  int off_dw_coi() const { return 6 * n_mach() + 1; }
};

/// Differential state x and stacked algebraic voltages v of one island.
struct SystemState {
  Eigen::VectorXd x;
  Eigen::VectorXd v;  // [re; im], COI frame
};

struct JacobianBlocks {
  Eigen::SparseMatrix<double> j11, j12, j21, j22;
  double dt_used = 0.0;
  Method method = Method::BEM;
};

/// Raw model partials; the stepping blocks and the A matrix both derive
/// from these.
struct ModelPartials {
  Eigen::SparseMatrix<double> fx, fv;  // df/dx (n x n), df/dV (n x 2m)
  Eigen::SparseMatrix<double> ix, iv;  // dI/dx (2m x n), dI/dV (2m x 2m)
};

/// Below this terminal voltage constant-power loads continue as constant
/// impedance; both branches agree at the threshold.
inline constexpr double kLoadConversionVoltage = 0.4;

IslandModel build_island_model(const CaseDefinition& c, const TopologyState& topo,
                               const Island& island);

/// Carry setpoints (v_ref, p_ref) from a previous model into a rebuilt one.
void carry_setpoints(const IslandModel& prev, IslandModel& next);

/// Right-hand side of the differential equations in the island COI frame.
Eigen::VectorXd eval_f(const IslandModel& m, const Eigen::VectorXd& x,
                       const Eigen::VectorXd& v);

/// Stacked current injections I(x, V): machine stator injections minus load
/// currents (constant power with low-voltage impedance continuation).
Eigen::VectorXd eval_injections(const IslandModel& m, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& v);

/// G(x, V) = Y_N V - I(x, V), stacked.
Eigen::VectorXd algebraic_residual(const IslandModel& m, const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& v);

ModelPartials eval_partials(const IslandModel& m, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& v);

/// Stepping Jacobian: J11 = I - c df/dx, J12 = -c df/dV with c = dt (BEM) or
/// dt/2 (TM); J21 = -dI/dx, J22 = Y_N - dI/dV.
JacobianBlocks assemble_jacobian(const IslandModel& m, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& v, double dt, Method method);

/// Newton on G alone using J22; used after discrete events and in frame
/// re-initialization. Returns false when it fails to reach tol.
bool resolve_algebraic(const IslandModel& m, const Eigen::VectorXd& x,
                       Eigen::VectorXd& v, double tol = 1e-8, int max_iters = 20);

/// Absolute machine speed deviations (relative + COI), pu.
Eigen::VectorXd machine_speeds(const IslandModel& m, const Eigen::VectorXd& x);

/// Per island-branch current magnitude, max of the two ends (charging
/// included), pu.
Eigen::VectorXd branch_current_mags(const IslandModel& m, const Eigen::VectorXd& v);

Eigen::VectorXd bus_voltage_mags(const Eigen::VectorXd& v);

/// Build models and COI-frame states for every energized island from a
/// solved power flow. Returns one (model, state) pair per island with
/// generation, in partition order.
std::vector<std::pair<IslandModel, SystemState>> initialize_islands(
    const CaseDefinition& c, const TopologyState& topo, const IslandPartition& part,
    const PowerFlowSolution& pf);

}  // namespace cascadesim
