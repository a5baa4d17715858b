#include "cascadesim/coi.hpp"

#include <cmath>
#include <complex>
#include <stdexcept>
#include <unordered_map>

namespace cascadesim {

ChildInit reinitialize_child(const CaseDefinition& c, const TopologyState& topo,
                             const Island& child, const IslandModel& parent,
                             const SystemState& parent_state, double alg_tol) {
  if (child.machine_indices.empty())
    throw std::invalid_argument("reinitialize_child: child island has no machines");

  ChildInit out;
  out.model = build_island_model(c, topo, child);
  carry_setpoints(parent, out.model);

  std::unordered_map<int, int> parent_slot;  // case machine idx -> parent slot
  for (int i = 0; i < parent.n_mach(); ++i) parent_slot[parent.machines[i].case_idx] = i;

  const int ng = out.model.n_mach();
  out.frame.parent_delta_coi = parent_state.x(parent.off_delta_coi());
  out.frame.parent_dw_coi = parent_state.x(parent.off_dw_coi());
  out.frame.delta_abs.resize(ng);
  out.frame.dw_abs.resize(ng);

  // Step I: absolute angles and speed deviations in the universal frame.
  for (int i = 0; i < ng; ++i) {
    const int ps = parent_slot.at(out.model.machines[i].case_idx);
    out.frame.delta_abs(i) = parent_state.x(parent.off(ps, IslandModel::kTheta)) +
                             out.frame.parent_delta_coi;
    out.frame.dw_abs(i) =
        parent_state.x(parent.off(ps, IslandModel::kDw)) + out.frame.parent_dw_coi;
  }

  // Step II: child COI by inertia-weighted means, device states untouched.
  double delta_c = 0.0, dw_c = 0.0;
  for (int i = 0; i < ng; ++i) {
    delta_c += out.model.machines[i].h * out.frame.delta_abs(i);
    dw_c += out.model.machines[i].h * out.frame.dw_abs(i);
  }
  delta_c /= out.model.h_total;
  dw_c /= out.model.h_total;
  out.frame.child_delta_coi = delta_c;
  out.frame.child_dw_coi = dw_c;

  out.state.x = Eigen::VectorXd::Zero(out.model.n_diff());
  for (int i = 0; i < ng; ++i) {
    const int ps = parent_slot.at(out.model.machines[i].case_idx);
    out.state.x(out.model.off(i, IslandModel::kEqp)) =
        parent_state.x(parent.off(ps, IslandModel::kEqp));
    out.state.x(out.model.off(i, IslandModel::kEdp)) =
        parent_state.x(parent.off(ps, IslandModel::kEdp));
    out.state.x(out.model.off(i, IslandModel::kTheta)) = out.frame.delta_abs(i) - delta_c;
    out.state.x(out.model.off(i, IslandModel::kDw)) = out.frame.dw_abs(i) - dw_c;
    out.state.x(out.model.off(i, IslandModel::kEfd)) =
        parent_state.x(parent.off(ps, IslandModel::kEfd));
    out.state.x(out.model.off(i, IslandModel::kPm)) =
        parent_state.x(parent.off(ps, IslandModel::kPm));
  }
  out.state.x(out.model.off_delta_coi()) = delta_c;
  out.state.x(out.model.off_dw_coi()) = dw_c;

  // Step III: child voltages, rotated into the child frame then re-solved
  // through J22.
  const int nbp = parent.n_bus();
  const int nbc = out.model.n_bus();
  out.state.v.resize(2 * nbc);
  const std::complex<double> rot = std::polar(1.0, out.frame.parent_delta_coi - delta_c);
  for (int k = 0; k < nbc; ++k) {
    const int pk = parent.bus_local.at(out.model.bus_ids[k]);
    const std::complex<double> vp(parent_state.v(pk), parent_state.v(nbp + pk));
    const std::complex<double> vc = vp * rot;
    out.state.v(k) = vc.real();
    out.state.v(nbc + k) = vc.imag();
  }
  Eigen::VectorXd v_guess = out.state.v;
  const double vmin_pre = bus_voltage_mags(v_guess).minCoeff();
  out.resolved = resolve_algebraic(out.model, out.state.x, out.state.v, alg_tol, 30);
  if (out.resolved) {
    const double vmin_post = bus_voltage_mags(out.state.v).minCoeff();
    if (vmin_post < 0.35 && vmin_pre > 0.6) {
      // landed on the low-voltage branch: discard, keep the rotated guess
      out.state.v = std::move(v_guess);
      out.resolved = false;
    }
  }
  return out;
}

}  // namespace cascadesim
