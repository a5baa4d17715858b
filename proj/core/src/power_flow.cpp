#include "cascadesim/power_flow.hpp"

#include <cmath>
#include <complex>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "cascadesim/network.hpp"

namespace cascadesim {

namespace {

enum class PfType { Slack, PV, PQ };

}  // namespace

PowerFlowSolution solve_power_flow(const CaseDefinition& c, double tol, int max_iters) {
  const int nb = static_cast<int>(c.buses.size());
  auto topo = TopologyState::all_in(c);
  AdmittanceMatrix adm = build_ybus(c, topo);

  std::vector<PfType> type(nb, PfType::PQ);
  Eigen::VectorXd p_spec = Eigen::VectorXd::Zero(nb);  // pu net injection
  Eigen::VectorXd q_spec = Eigen::VectorXd::Zero(nb);
  Eigen::VectorXd vm(nb), va(nb);
  for (int i = 0; i < nb; ++i) {
    vm(i) = c.buses[i].vm0;
    va(i) = c.buses[i].va0_deg * M_PI / 180.0;
    p_spec(i) = -c.buses[i].p_load_mw / c.base_mva;
    q_spec(i) = -c.buses[i].q_load_mvar / c.base_mva;
    if (c.buses[i].kind == BusKind::Slack) type[i] = PfType::Slack;
  }
  for (const auto& m : c.machines) {
    int bi = c.bus_index(m.bus);
    if (type[bi] == PfType::PQ) type[bi] = PfType::PV;
    p_spec(bi) += m.p_set_mw / c.base_mva;
    vm(bi) = m.v_set;
  }

  Eigen::MatrixXcd y = Eigen::MatrixXcd(adm.y);

  auto injections = [&](Eigen::VectorXd& p, Eigen::VectorXd& q) {
    Eigen::VectorXcd v(nb);
    for (int i = 0; i < nb; ++i) v(i) = std::polar(vm(i), va(i));
    Eigen::VectorXcd s = v.array() * (y * v).conjugate().array();
    p = s.real();
    q = s.imag();
  };

  std::vector<int> ang_vars, mag_vars;
  for (int i = 0; i < nb; ++i) {
    if (type[i] != PfType::Slack) ang_vars.push_back(i);
    if (type[i] == PfType::PQ) mag_vars.push_back(i);
  }
  const int na = static_cast<int>(ang_vars.size());
  const int nm = static_cast<int>(mag_vars.size());

  PowerFlowSolution sol;
  Eigen::VectorXd p_calc(nb), q_calc(nb);
  double mis = 0.0;
  int it = 0;
  for (; it <= max_iters; ++it) {
    injections(p_calc, q_calc);
    Eigen::VectorXd rhs(na + nm);
    for (int k = 0; k < na; ++k) rhs(k) = p_spec(ang_vars[k]) - p_calc(ang_vars[k]);
    for (int k = 0; k < nm; ++k) rhs(na + k) = q_spec(mag_vars[k]) - q_calc(mag_vars[k]);
    mis = rhs.size() ? rhs.lpNorm<Eigen::Infinity>() : 0.0;
    if (mis <= tol) break;
    if (it == max_iters) break;

    // Polar Jacobian, dense at desk scale.
    Eigen::MatrixXd jac(na + nm, na + nm);
    jac.setZero();
    Eigen::VectorXcd v(nb);
    for (int i = 0; i < nb; ++i) v(i) = std::polar(vm(i), va(i));
    auto dp_dth = [&](int i, int j) {
      if (i == j) return -q_calc(i) - vm(i) * vm(i) * y(i, i).imag();
      std::complex<double> t = v(i) * std::conj(y(i, j) * v(j));
      return t.imag();
    };
    auto dq_dth = [&](int i, int j) {
      if (i == j) return p_calc(i) - vm(i) * vm(i) * y(i, i).real();
      std::complex<double> t = v(i) * std::conj(y(i, j) * v(j));
      return -t.real();
    };
    auto dp_dvm = [&](int i, int j) {
      if (i == j) return p_calc(i) / vm(i) + vm(i) * y(i, i).real();
      std::complex<double> t = v(i) * std::conj(y(i, j) * v(j));
      return t.real() / vm(j);
    };
    auto dq_dvm = [&](int i, int j) {
      if (i == j) return q_calc(i) / vm(i) - vm(i) * y(i, i).imag();
      std::complex<double> t = v(i) * std::conj(y(i, j) * v(j));
      return t.imag() / vm(j);
    };
    for (int r = 0; r < na; ++r) {
      for (int s = 0; s < na; ++s) jac(r, s) = dp_dth(ang_vars[r], ang_vars[s]);
      for (int s = 0; s < nm; ++s) jac(r, na + s) = dp_dvm(ang_vars[r], mag_vars[s]);
    }
    for (int r = 0; r < nm; ++r) {
      for (int s = 0; s < na; ++s) jac(na + r, s) = dq_dth(mag_vars[r], ang_vars[s]);
      for (int s = 0; s < nm; ++s) jac(na + r, na + s) = dq_dvm(mag_vars[r], mag_vars[s]);
    }
    Eigen::VectorXd dx = jac.partialPivLu().solve(rhs);
    if (!dx.allFinite()) break;
    for (int k = 0; k < na; ++k) va(ang_vars[k]) += dx(k);
    for (int k = 0; k < nm; ++k) vm(mag_vars[k]) += dx(na + k);
  }

  sol.vm = vm;
  sol.va = va;
  sol.iterations = it;
  sol.mismatch_inf = mis;
  sol.converged = mis <= tol;

  // Allocate bus-level generation to machines: PV machines carry their
  // setpoints plus a rating-weighted share of the bus P residual (slack) and
  // of the bus Q.
  injections(p_calc, q_calc);
  sol.p_gen.assign(c.machines.size(), 0.0);
  sol.q_gen.assign(c.machines.size(), 0.0);
  for (int bi = 0; bi < nb; ++bi) {
    double rating_sum = 0.0;
    for (const auto& m : c.machines)
      if (c.bus_index(m.bus) == bi) rating_sum += m.rating_mva;
    if (rating_sum <= 0.0) continue;
    double p_bus_gen = p_calc(bi) + c.buses[bi].p_load_mw / c.base_mva;
    double q_bus_gen = q_calc(bi) + c.buses[bi].q_load_mvar / c.base_mva;
    for (std::size_t mi = 0; mi < c.machines.size(); ++mi) {
      if (c.bus_index(c.machines[mi].bus) != bi) continue;
      double w = c.machines[mi].rating_mva / rating_sum;
      sol.p_gen[mi] = p_bus_gen * w;
      sol.q_gen[mi] = q_bus_gen * w;
    }
  }
  return sol;
}

}  // namespace cascadesim
