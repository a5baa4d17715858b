#include "cascadesim/dae.hpp"

#include <cmath>
#include <complex>

#include <Eigen/SparseLU>

namespace cascadesim {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct MachineLocals {
  double s, c;          // sin/cos of rotor angle
  double vre, vim;      // terminal voltage, COI frame
  double vd, vq;        // dq terminal voltage
  double id, iq;        // dq stator currents
  double pe;            // air-gap power
  double vt;            // |V|
};

MachineLocals machine_locals(const IslandModel& m, int mi, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& v) {
  const auto& mc = m.machines[mi];
  MachineLocals L;
  const int nb = m.n_bus();
  const double theta = x(m.off(mi, IslandModel::kTheta));
  L.s = std::sin(theta);
  L.c = std::cos(theta);
  L.vre = v(mc.local_bus);
  L.vim = v(nb + mc.local_bus);
  L.vd = L.vre * L.s - L.vim * L.c;
  L.vq = L.vre * L.c + L.vim * L.s;
  const double eqp = x(m.off(mi, IslandModel::kEqp));
  const double edp = x(m.off(mi, IslandModel::kEdp));
  L.id = (eqp - L.vq) / mc.xdp;
  L.iq = (L.vd - edp) / mc.xqp;
  L.pe = edp * L.id + eqp * L.iq + (mc.xqp - mc.xdp) * L.id * L.iq;
  L.vt = std::hypot(L.vre, L.vim);
  return L;
}

// First-order lag on a hard-limited input: with the input clamped into
// [efd_min, efd_max] and the state initialized inside, the state can never
// leave the band, so no anti-windup switching is needed.
double exciter_input(const MachineRuntime& mc, double vt) {
  return std::clamp(mc.k_a * (mc.v_ref - vt), mc.efd_min, mc.efd_max);
}

}  // namespace

IslandModel build_island_model(const CaseDefinition& c, const TopologyState& topo,
                               const Island& island) {
  IslandModel m;
  m.base_mva = c.base_mva;
  m.f_nominal = c.f_nominal;
  m.omega_s = 2.0 * kPi * c.f_nominal;
  m.bus_ids = island.bus_ids;
  for (std::size_t i = 0; i < m.bus_ids.size(); ++i)
    m.bus_local[m.bus_ids[i]] = static_cast<int>(i);

  const int nb = m.n_bus();
  m.p_load = Eigen::VectorXd::Zero(nb);
  m.q_load = Eigen::VectorXd::Zero(nb);
  for (int i = 0; i < nb; ++i) {
    int ci = c.bus_index(m.bus_ids[i]);
    double frac = topo.shed_remaining[ci];
    m.p_load(i) = frac * c.buses[ci].p_load_mw / c.base_mva;
    m.q_load(i) = frac * c.buses[ci].q_load_mvar / c.base_mva;
  }

  for (int mi : island.machine_indices) {
    const auto& mp = c.machines[mi];
    MachineRuntime r;
    r.case_idx = mi;
    r.local_bus = m.bus_local.at(mp.bus);
    r.h = mp.h;
    r.d = mp.d;
    r.xd = mp.xd;
    r.xq = mp.xq;
    r.xdp = mp.xdp;
    r.xqp = mp.xqp;
    r.tdop = mp.tdop;
    r.tqop = mp.tqop;
    r.is_condenser = mp.is_condenser;
    r.has_governor = mp.governor.has_value();
    if (mp.governor) {
      r.r_droop = mp.governor->r_droop;
      r.t_g = mp.governor->t_g;
    }
    r.k_a = mp.exciter.k_a;
    r.t_a = mp.exciter.t_a;
    r.efd_min = mp.exciter.efd_min;
    r.efd_max = mp.exciter.efd_max;
    m.machines.push_back(r);
    m.h_total += r.h;
  }

  for (int bid : island.branch_ids) {
    for (const auto& br : c.branches) {
      if (br.id != bid) continue;
      IslandBranchRef ref;
      ref.id = br.id;
      ref.from_local = m.bus_local.at(br.from_bus);
      ref.to_local = m.bus_local.at(br.to_bus);
      ref.y_series = 1.0 / std::complex<double>(br.r, br.x);
      ref.b_half = br.b_charging / 2.0;
      ref.current_limit = br.current_limit;
      m.branches.push_back(ref);
    }
  }

  m.adm = build_ybus(c, topo, m.bus_ids);
  return m;
}

void carry_setpoints(const IslandModel& prev, IslandModel& next) {
  for (auto& mc : next.machines) {
    for (const auto& pm : prev.machines) {
      if (pm.case_idx == mc.case_idx) {
        mc.v_ref = pm.v_ref;
        mc.p_ref = pm.p_ref;
        break;
      }
    }
  }
}

Eigen::VectorXd eval_f(const IslandModel& m, const Eigen::VectorXd& x,
                       const Eigen::VectorXd& v) {
  const int ng = m.n_mach();
  Eigen::VectorXd f = Eigen::VectorXd::Zero(m.n_diff());
  const double dw_coi = x(m.off_dw_coi());

  // COI acceleration first: inertia-weighted mean of the swing rhs.
  double acc_coi = 0.0;
  std::vector<MachineLocals> locals(ng);
  for (int i = 0; i < ng; ++i) {
    locals[i] = machine_locals(m, i, x, v);
    const auto& mc = m.machines[i];
    const double dw_abs = x(m.off(i, IslandModel::kDw)) + dw_coi;
    const double pm = mc.is_condenser ? 0.0 : x(m.off(i, IslandModel::kPm));
    acc_coi += (pm - locals[i].pe - mc.d * dw_abs) / (2.0 * m.h_total);
  }

  for (int i = 0; i < ng; ++i) {
    const auto& mc = m.machines[i];
    const auto& L = locals[i];
    const double eqp = x(m.off(i, IslandModel::kEqp));
    const double edp = x(m.off(i, IslandModel::kEdp));
    const double dw = x(m.off(i, IslandModel::kDw));
    const double efd = x(m.off(i, IslandModel::kEfd));
    const double pm = mc.is_condenser ? 0.0 : x(m.off(i, IslandModel::kPm));
    const double dw_abs = dw + dw_coi;

    f(m.off(i, IslandModel::kEqp)) = (efd - eqp - (mc.xd - mc.xdp) * L.id) / mc.tdop;
    f(m.off(i, IslandModel::kEdp)) = (-edp + (mc.xq - mc.xqp) * L.iq) / mc.tqop;
    f(m.off(i, IslandModel::kTheta)) = m.omega_s * dw;
    f(m.off(i, IslandModel::kDw)) =
        (pm - L.pe - mc.d * dw_abs) / (2.0 * mc.h) - acc_coi;

    f(m.off(i, IslandModel::kEfd)) = (exciter_input(mc, L.vt) - efd) / mc.t_a;

    if (mc.has_governor && !mc.is_condenser) {
      f(m.off(i, IslandModel::kPm)) =
          (mc.p_ref - dw_abs / mc.r_droop - x(m.off(i, IslandModel::kPm))) / mc.t_g;
    } else {
      f(m.off(i, IslandModel::kPm)) = 0.0;
    }
  }

  f(m.off_delta_coi()) = m.omega_s * dw_coi;
  f(m.off_dw_coi()) = acc_coi;
  return f;
}

Eigen::VectorXd eval_injections(const IslandModel& m, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& v) {
  const int nb = m.n_bus();
  Eigen::VectorXd inj = Eigen::VectorXd::Zero(2 * nb);

  for (int i = 0; i < m.n_mach(); ++i) {
    const auto L = machine_locals(m, i, x, v);
    const int k = m.machines[i].local_bus;
    inj(k) += L.id * L.s + L.iq * L.c;
    inj(nb + k) += L.iq * L.s - L.id * L.c;
  }

  for (int k = 0; k < nb; ++k) {
    const double p = m.p_load(k);
    const double q = m.q_load(k);
    if (p == 0.0 && q == 0.0) continue;
    const double vre = v(k), vim = v(nb + k);
    const double v2 = vre * vre + vim * vim;
    const double vth2 = kLoadConversionVoltage * kLoadConversionVoltage;
    const double denom = v2 >= vth2 ? v2 : vth2;
    inj(k) -= (p * vre + q * vim) / denom;
    inj(nb + k) -= (p * vim - q * vre) / denom;
  }
  return inj;
}

Eigen::VectorXd algebraic_residual(const IslandModel& m, const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& v) {
  return m.adm.y_real_form * v - eval_injections(m, x, v);
}

ModelPartials eval_partials(const IslandModel& m, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& v) {
  const int ng = m.n_mach();
  const int nb = m.n_bus();
  const int n = m.n_diff();

  std::vector<Eigen::Triplet<double>> tfx, tfv, tix, tiv;

  // Swing accelerations couple every machine through the COI mean; collect
  // each machine's contribution once, then reuse for the per-machine rows
  // and the dw_coi row.
  struct AccPartial {
    // partial of (pm_i - pe_i - d_i dw_abs_i) w.r.t. the machine's own
    // states and its bus voltage
    double d_eqp, d_edp, d_theta, d_dw, d_pm, d_vre, d_vim, d_dwcoi;
    int bus;
  };
  std::vector<AccPartial> accp(ng);
  std::vector<MachineLocals> locals(ng);

  for (int i = 0; i < ng; ++i) {
    const auto& mc = m.machines[i];
    const auto L = machine_locals(m, i, x, v);
    locals[i] = L;
    const double did_deqp = 1.0 / mc.xdp;
    const double did_dth = L.vd / mc.xdp;
    const double did_dvre = -L.c / mc.xdp;
    const double did_dvim = -L.s / mc.xdp;
    const double diq_dedp = -1.0 / mc.xqp;
    const double diq_dth = L.vq / mc.xqp;
    const double diq_dvre = L.s / mc.xqp;
    const double diq_dvim = -L.c / mc.xqp;

    const double dpe_did = x(m.off(i, IslandModel::kEdp)) + (mc.xqp - mc.xdp) * L.iq;
    const double dpe_diq = x(m.off(i, IslandModel::kEqp)) + (mc.xqp - mc.xdp) * L.id;
    const double dpe_deqp = L.iq + dpe_did * did_deqp;
    const double dpe_dedp = L.id + dpe_diq * diq_dedp;
    const double dpe_dth = dpe_did * did_dth + dpe_diq * diq_dth;
    const double dpe_dvre = dpe_did * did_dvre + dpe_diq * diq_dvre;
    const double dpe_dvim = dpe_did * did_dvim + dpe_diq * diq_dvim;

    AccPartial& a = accp[i];
    a.bus = mc.local_bus;
    a.d_eqp = -dpe_deqp;
    a.d_edp = -dpe_dedp;
    a.d_theta = -dpe_dth;
    a.d_dw = -mc.d;
    a.d_dwcoi = -mc.d;
    a.d_pm = mc.is_condenser ? 0.0 : 1.0;
    a.d_vre = -dpe_dvre;
    a.d_vim = -dpe_dvim;
  }

  for (int i = 0; i < ng; ++i) {
    const auto& mc = m.machines[i];
    const auto& L = locals[i];
    const double did_deqp = 1.0 / mc.xdp;
    const double did_dth = L.vd / mc.xdp;
    const double did_dvre = -L.c / mc.xdp;
    const double did_dvim = -L.s / mc.xdp;
    const double diq_dedp = -1.0 / mc.xqp;
    const double diq_dth = L.vq / mc.xqp;
    const double diq_dvre = L.s / mc.xqp;
    const double diq_dvim = -L.c / mc.xqp;

    const int r_eqp = m.off(i, IslandModel::kEqp);
    const int r_edp = m.off(i, IslandModel::kEdp);
    const int r_th = m.off(i, IslandModel::kTheta);
    const int r_dw = m.off(i, IslandModel::kDw);
    const int r_efd = m.off(i, IslandModel::kEfd);
    const int r_pm = m.off(i, IslandModel::kPm);
    const int c_vre = mc.local_bus;
    const int c_vim = nb + mc.local_bus;

    // d Eqp'/dt = (Efd - Eqp - (xd - xdp) id) / tdop
    tfx.emplace_back(r_eqp, r_eqp, (-1.0 - (mc.xd - mc.xdp) * did_deqp) / mc.tdop);
    tfx.emplace_back(r_eqp, r_th, -(mc.xd - mc.xdp) * did_dth / mc.tdop);
    tfx.emplace_back(r_eqp, r_efd, 1.0 / mc.tdop);
    tfv.emplace_back(r_eqp, c_vre, -(mc.xd - mc.xdp) * did_dvre / mc.tdop);
    tfv.emplace_back(r_eqp, c_vim, -(mc.xd - mc.xdp) * did_dvim / mc.tdop);

    // d Edp'/dt = (-Edp + (xq - xqp) iq) / tqop
    tfx.emplace_back(r_edp, r_edp, (-1.0 + (mc.xq - mc.xqp) * diq_dedp) / mc.tqop);
    tfx.emplace_back(r_edp, r_th, (mc.xq - mc.xqp) * diq_dth / mc.tqop);
    tfv.emplace_back(r_edp, c_vre, (mc.xq - mc.xqp) * diq_dvre / mc.tqop);
    tfv.emplace_back(r_edp, c_vim, (mc.xq - mc.xqp) * diq_dvim / mc.tqop);

    // d theta/dt = omega_s dw
    tfx.emplace_back(r_th, r_dw, m.omega_s);

    // d dw/dt = acc_i - acc_coi, acc_i = (pm - pe - d dw_abs)/(2h)
    // own contribution
    const double inv2h = 1.0 / (2.0 * mc.h);
    tfx.emplace_back(r_dw, r_eqp, accp[i].d_eqp * inv2h);
    tfx.emplace_back(r_dw, r_edp, accp[i].d_edp * inv2h);
    tfx.emplace_back(r_dw, r_th, accp[i].d_theta * inv2h);
    tfx.emplace_back(r_dw, r_dw, accp[i].d_dw * inv2h);
    if (!mc.is_condenser) tfx.emplace_back(r_dw, r_pm, accp[i].d_pm * inv2h);
    tfx.emplace_back(r_dw, m.off_dw_coi(), accp[i].d_dwcoi * inv2h);
    tfv.emplace_back(r_dw, c_vre, accp[i].d_vre * inv2h);
    tfv.emplace_back(r_dw, c_vim, accp[i].d_vim * inv2h);
    // minus COI mean over all machines
    const double inv2ht = 1.0 / (2.0 * m.h_total);
    for (int j = 0; j < ng; ++j) {
      const auto& aj = accp[j];
      tfx.emplace_back(r_dw, m.off(j, IslandModel::kEqp), -aj.d_eqp * inv2ht);
      tfx.emplace_back(r_dw, m.off(j, IslandModel::kEdp), -aj.d_edp * inv2ht);
      tfx.emplace_back(r_dw, m.off(j, IslandModel::kTheta), -aj.d_theta * inv2ht);
      tfx.emplace_back(r_dw, m.off(j, IslandModel::kDw), -aj.d_dw * inv2ht);
      if (!m.machines[j].is_condenser)
        tfx.emplace_back(r_dw, m.off(j, IslandModel::kPm), -aj.d_pm * inv2ht);
      tfx.emplace_back(r_dw, m.off_dw_coi(), -aj.d_dwcoi * inv2ht);
      tfv.emplace_back(r_dw, aj.bus, -aj.d_vre * inv2ht);
      tfv.emplace_back(r_dw, nb + aj.bus, -aj.d_vim * inv2ht);
    }

    // exciter: the input clamp zeroes the voltage sensitivity while railed
    tfx.emplace_back(r_efd, r_efd, -1.0 / mc.t_a);
    const double raw_input = mc.k_a * (mc.v_ref - L.vt);
    if (raw_input > mc.efd_min && raw_input < mc.efd_max && L.vt > 1e-9) {
      tfv.emplace_back(r_efd, c_vre, -mc.k_a * L.vre / (L.vt * mc.t_a));
      tfv.emplace_back(r_efd, c_vim, -mc.k_a * L.vim / (L.vt * mc.t_a));
    }

    // governor
    if (mc.has_governor && !mc.is_condenser) {
      tfx.emplace_back(r_pm, r_dw, -1.0 / (mc.r_droop * mc.t_g));
      tfx.emplace_back(r_pm, m.off_dw_coi(), -1.0 / (mc.r_droop * mc.t_g));
      tfx.emplace_back(r_pm, r_pm, -1.0 / mc.t_g);
    }
  }

  // COI aggregates
  tfx.emplace_back(m.off_delta_coi(), m.off_dw_coi(), m.omega_s);
  {
    const int r = m.off_dw_coi();
    const double inv2ht = 1.0 / (2.0 * m.h_total);
    for (int j = 0; j < ng; ++j) {
      const auto& aj = accp[j];
      tfx.emplace_back(r, m.off(j, IslandModel::kEqp), aj.d_eqp * inv2ht);
      tfx.emplace_back(r, m.off(j, IslandModel::kEdp), aj.d_edp * inv2ht);
      tfx.emplace_back(r, m.off(j, IslandModel::kTheta), aj.d_theta * inv2ht);
      tfx.emplace_back(r, m.off(j, IslandModel::kDw), aj.d_dw * inv2ht);
      if (!m.machines[j].is_condenser)
        tfx.emplace_back(r, m.off(j, IslandModel::kPm), aj.d_pm * inv2ht);
      tfx.emplace_back(r, m.off_dw_coi(), aj.d_dwcoi * inv2ht);
      tfv.emplace_back(r, aj.bus, aj.d_vre * inv2ht);
      tfv.emplace_back(r, nb + aj.bus, aj.d_vim * inv2ht);
    }
  }

  // Injection partials: machine stator contributions.
  for (int i = 0; i < ng; ++i) {
    const auto& mc = m.machines[i];
    const auto& L = locals[i];
    const int k = mc.local_bus;
    const double did_dth = L.vd / mc.xdp;
    const double diq_dth = L.vq / mc.xqp;

    tix.emplace_back(k, m.off(i, IslandModel::kEqp), L.s / mc.xdp);
    tix.emplace_back(k, m.off(i, IslandModel::kEdp), -L.c / mc.xqp);
    tix.emplace_back(k, m.off(i, IslandModel::kTheta),
                     L.id * L.c - L.iq * L.s + L.s * did_dth + L.c * diq_dth);
    tix.emplace_back(nb + k, m.off(i, IslandModel::kEqp), -L.c / mc.xdp);
    tix.emplace_back(nb + k, m.off(i, IslandModel::kEdp), -L.s / mc.xqp);
    tix.emplace_back(nb + k, m.off(i, IslandModel::kTheta),
                     L.iq * L.c + L.id * L.s + L.s * diq_dth - L.c * did_dth);

    const double sc = L.s * L.c;
    tiv.emplace_back(k, k, sc * (1.0 / mc.xqp - 1.0 / mc.xdp));
    tiv.emplace_back(k, nb + k, -(L.s * L.s / mc.xdp + L.c * L.c / mc.xqp));
    tiv.emplace_back(nb + k, k, L.s * L.s / mc.xqp + L.c * L.c / mc.xdp);
    tiv.emplace_back(nb + k, nb + k, sc * (1.0 / mc.xdp - 1.0 / mc.xqp));
  }

  // Load partials.
  for (int k = 0; k < nb; ++k) {
    const double p = m.p_load(k);
    const double q = m.q_load(k);
    if (p == 0.0 && q == 0.0) continue;
    const double vre = v(k), vim = v(nb + k);
    const double v2 = vre * vre + vim * vim;
    const double vth2 = kLoadConversionVoltage * kLoadConversionVoltage;
    double d_re_dvre, d_re_dvim, d_im_dvre, d_im_dvim;
    if (v2 >= vth2) {
      const double num_re = p * vre + q * vim;
      const double num_im = p * vim - q * vre;
      d_re_dvre = p / v2 - num_re * 2.0 * vre / (v2 * v2);
      d_re_dvim = q / v2 - num_re * 2.0 * vim / (v2 * v2);
      d_im_dvre = -q / v2 - num_im * 2.0 * vre / (v2 * v2);
      d_im_dvim = p / v2 - num_im * 2.0 * vim / (v2 * v2);
    } else {
      d_re_dvre = p / vth2;
      d_re_dvim = q / vth2;
      d_im_dvre = -q / vth2;
      d_im_dvim = p / vth2;
    }
    tiv.emplace_back(k, k, -d_re_dvre);
    tiv.emplace_back(k, nb + k, -d_re_dvim);
    tiv.emplace_back(nb + k, k, -d_im_dvre);
    tiv.emplace_back(nb + k, nb + k, -d_im_dvim);
  }

  ModelPartials P;
  P.fx.resize(n, n);
  P.fx.setFromTriplets(tfx.begin(), tfx.end());
  P.fv.resize(n, 2 * nb);
  P.fv.setFromTriplets(tfv.begin(), tfv.end());
  P.ix.resize(2 * nb, n);
  P.ix.setFromTriplets(tix.begin(), tix.end());
  P.iv.resize(2 * nb, 2 * nb);
  P.iv.setFromTriplets(tiv.begin(), tiv.end());
  return P;
}

JacobianBlocks assemble_jacobian(const IslandModel& m, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& v, double dt, Method method) {
  ModelPartials P = eval_partials(m, x, v);
  const double c = method == Method::TM ? dt / 2.0 : dt;
  JacobianBlocks B;
  B.dt_used = dt;
  B.method = method;
  Eigen::SparseMatrix<double> eye(m.n_diff(), m.n_diff());
  eye.setIdentity();
  B.j11 = eye - c * P.fx;
  B.j12 = -c * P.fv;
  B.j21 = -P.ix;
  B.j22 = m.adm.y_real_form - P.iv;
  return B;
}

bool resolve_algebraic(const IslandModel& m, const Eigen::VectorXd& x,
                       Eigen::VectorXd& v, double tol, int max_iters) {
  double g_norm = algebraic_residual(m, x, v).lpNorm<Eigen::Infinity>();
  for (int it = 0; it < max_iters; ++it) {
    if (g_norm <= tol) return true;
    ModelPartials P = eval_partials(m, x, v);
    Eigen::SparseMatrix<double> j22 = m.adm.y_real_form - P.iv;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(j22);
    if (lu.info() != Eigen::Success) return false;
    Eigen::VectorXd dv = lu.solve(-algebraic_residual(m, x, v));
    if (!dv.allFinite()) return false;
    // Newton is allowed to wander, but blow-ups get damped.
    double alpha = 1.0;
    Eigen::VectorXd trial;
    double trial_norm;
    for (int cut = 0;; ++cut) {
      trial = v + alpha * dv;
      trial_norm = algebraic_residual(m, x, trial).lpNorm<Eigen::Infinity>();
      if (std::isfinite(trial_norm) && (trial_norm <= 10.0 * g_norm || cut >= 5)) break;
      alpha /= 2.0;
    }
    if (!std::isfinite(trial_norm)) return false;
    v = std::move(trial);
    g_norm = trial_norm;
  }
  return g_norm <= tol;
}

Eigen::VectorXd machine_speeds(const IslandModel& m, const Eigen::VectorXd& x) {
  Eigen::VectorXd s(m.n_mach());
  const double dw_coi = x(m.off_dw_coi());
  for (int i = 0; i < m.n_mach(); ++i) s(i) = x(m.off(i, IslandModel::kDw)) + dw_coi;
  return s;
}

Eigen::VectorXd branch_current_mags(const IslandModel& m, const Eigen::VectorXd& v) {
  const int nb = m.n_bus();
  Eigen::VectorXd mags(m.branches.size());
  for (std::size_t bi = 0; bi < m.branches.size(); ++bi) {
    const auto& br = m.branches[bi];
    const std::complex<double> vf(v(br.from_local), v(nb + br.from_local));
    const std::complex<double> vt(v(br.to_local), v(nb + br.to_local));
    const std::complex<double> iser = br.y_series * (vf - vt);
    const std::complex<double> i_from = iser + std::complex<double>(0.0, br.b_half) * vf;
    const std::complex<double> i_to = -iser + std::complex<double>(0.0, br.b_half) * vt;
    mags(static_cast<Eigen::Index>(bi)) = std::max(std::abs(i_from), std::abs(i_to));
  }
  return mags;
}

Eigen::VectorXd bus_voltage_mags(const Eigen::VectorXd& v) {
  const auto nb = v.size() / 2;
  Eigen::VectorXd mags(nb);
  for (Eigen::Index k = 0; k < nb; ++k) mags(k) = std::hypot(v(k), v(nb + k));
  return mags;
}

std::vector<std::pair<IslandModel, SystemState>> initialize_islands(
    const CaseDefinition& c, const TopologyState& topo, const IslandPartition& part,
    const PowerFlowSolution& pf) {
  std::vector<std::pair<IslandModel, SystemState>> out;
  for (const auto& island : part.islands) {
    if (!island.has_generation) continue;
    IslandModel m = build_island_model(c, topo, island);
    const int ng = m.n_mach();
    const int nb = m.n_bus();
    SystemState st;
    st.x = Eigen::VectorXd::Zero(m.n_diff());

    std::vector<double> delta(ng);
    double delta_coi = 0.0;
    for (int i = 0; i < ng; ++i) {
      auto& mc = m.machines[i];
      const auto& mp = c.machines[mc.case_idx];
      const int ci = c.bus_index(mp.bus);
      const std::complex<double> vph = std::polar(pf.vm(ci), pf.va(ci));
      const std::complex<double> s(pf.p_gen[mc.case_idx], pf.q_gen[mc.case_idx]);
      const std::complex<double> cur = std::conj(s / vph);
      const std::complex<double> eq_behind_xq = vph + std::complex<double>(0.0, mc.xq) * cur;
      delta[i] = std::arg(eq_behind_xq);
      delta_coi += mc.h * delta[i] / m.h_total;
    }

    for (int i = 0; i < ng; ++i) {
      auto& mc = m.machines[i];
      const auto& mp = c.machines[mc.case_idx];
      const int ci = c.bus_index(mp.bus);
      const std::complex<double> vph = std::polar(pf.vm(ci), pf.va(ci));
      const std::complex<double> s(pf.p_gen[mc.case_idx], pf.q_gen[mc.case_idx]);
      const std::complex<double> cur = std::conj(s / vph);
      const double sd = std::sin(delta[i]), cd = std::cos(delta[i]);
      const double vd = vph.real() * sd - vph.imag() * cd;
      const double vq = vph.real() * cd + vph.imag() * sd;
      const double id = cur.real() * sd - cur.imag() * cd;
      const double iq = cur.real() * cd + cur.imag() * sd;
      const double eqp = vq + mc.xdp * id;
      const double edp = vd - mc.xqp * iq;
      const double efd = eqp + (mc.xd - mc.xdp) * id;
      const double pe = edp * id + eqp * iq + (mc.xqp - mc.xdp) * id * iq;

      st.x(m.off(i, IslandModel::kEqp)) = eqp;
      st.x(m.off(i, IslandModel::kEdp)) = edp;
      st.x(m.off(i, IslandModel::kTheta)) = delta[i] - delta_coi;
      st.x(m.off(i, IslandModel::kDw)) = 0.0;
      st.x(m.off(i, IslandModel::kEfd)) = efd;
      st.x(m.off(i, IslandModel::kPm)) = mc.is_condenser ? 0.0 : pe;
      mc.v_ref = pf.vm(ci) + efd / mc.k_a;
      mc.p_ref = mc.is_condenser ? 0.0 : pe;
    }
    st.x(m.off_delta_coi()) = delta_coi;
    st.x(m.off_dw_coi()) = 0.0;

    st.v = Eigen::VectorXd(2 * nb);
    for (int k = 0; k < nb; ++k) {
      const int ci = c.bus_index(m.bus_ids[k]);
      const std::complex<double> vph =
          std::polar(pf.vm(ci), pf.va(ci)) * std::polar(1.0, -delta_coi);
      st.v(k) = vph.real();
      st.v(nb + k) = vph.imag();
    }
    out.emplace_back(std::move(m), std::move(st));
  }
  return out;
}

}  // namespace cascadesim
