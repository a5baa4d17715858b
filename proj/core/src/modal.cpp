#include "cascadesim/modal.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>

#include "cascadesim/integrators.hpp"

namespace cascadesim {

EquilibriumResult settle_equilibrium(const IslandModel& model, const SystemState& start,
                                     const IntegratorConfig& integ, const PcConfig& pc) {
  EquilibriumResult out;
  SystemState st = start;
  double t = 0.0;
  double dt = integ.dt_min;
  std::deque<std::pair<double, Eigen::VectorXd>> window;
  window.emplace_back(0.0, machine_speeds(model, st.x));

  while (t < pc.settle_time_cap) {
    dt = std::min(dt, pc.settle_time_cap - t);
    StepResult r;
    try {
      r = step_bem(model, st, dt, integ);
    } catch (const SingularJacobianError&) {
      out.settled = st;
      out.t_elapsed = t;
      return out;  // settled_ok stays false
    }
    if (!r.converged) {
      if (dt > integ.dt_event) {
        dt = std::max(dt / 2.0, integ.dt_event);
        continue;
      }
      out.settled = st;
      out.t_elapsed = t;
      return out;
    }
    st.x = r.x;
    st.v = r.v;
    t += r.dt_taken;
    window.emplace_back(t, machine_speeds(model, st.x));
    while (window.size() > 1 && window[1].first <= t - pc.settle_window)
      window.pop_front();

    if (t >= pc.settle_window && window.size() >= 3) {
      double worst = 0.0;
      for (int i = 0; i < model.n_mach(); ++i) {
        double lo = window.front().second(i), hi = lo;
        for (const auto& [tw, sp] : window) {
          lo = std::min(lo, sp(i));
          hi = std::max(hi, sp(i));
        }
        worst = std::max(worst, hi - lo);
      }
      if (worst <= pc.settle_speed_tol) {
        out.settled = st;
        out.t_elapsed = t;
        out.settled_ok = true;
        out.dt_final = r.dt_taken;
        out.jac = assemble_jacobian(model, st.x, st.v, r.dt_taken, Method::BEM);
        return out;
      }
    }
    dt = adapt_step_bem(r.dt_taken, r.first_mismatch_inf, integ);
  }
  out.settled = st;
  out.t_elapsed = t;
  return out;
}

Eigen::MatrixXd build_a_matrix(const JacobianBlocks& blocks, double dt) {
  const int n = static_cast<int>(blocks.j11.rows());
  const int na = static_cast<int>(blocks.j22.rows());
  Eigen::MatrixXd p11 = Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd(blocks.j11);
  p11 /= dt;
  if (na == 0) return p11;

  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(blocks.j22);
  if (lu.info() != Eigen::Success)
    throw SingularJacobianError("J22 singular while assembling the A matrix");
  Eigen::MatrixXd p21 = -Eigen::MatrixXd(blocks.j21);
  Eigen::MatrixXd p22inv_p21(na, n);
  for (int j = 0; j < n; ++j) p22inv_p21.col(j) = lu.solve(Eigen::VectorXd(p21.col(j)));
  Eigen::MatrixXd p12 = -Eigen::MatrixXd(blocks.j12) / dt;
  return p11 + p12 * p22inv_p21;
}

Eigensystem eigendecompose(const Eigen::MatrixXd& a) {
  Eigen::EigenSolver<Eigen::MatrixXd> solver(a, /*computeEigenvectors=*/true);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("eigendecomposition did not converge");
  Eigensystem out;
  out.values = solver.eigenvalues();
  out.vectors = solver.eigenvectors();
  for (int j = 0; j < out.vectors.cols(); ++j)
    out.vectors.col(j).normalize();
  return out;
}

InstabilityVerdict detect_and_rank(const Eigensystem& eig, const IslandModel& model,
                                   const PcConfig& pc) {
  InstabilityVerdict out;
  const int ng = model.n_mach();
  std::vector<int> speed_rows(ng);
  for (int i = 0; i < ng; ++i) speed_rows[i] = model.off(i, IslandModel::kDw);

  std::vector<int> unstable_idx;
  for (int j = 0; j < eig.values.size(); ++j) {
    if (eig.values(j).real() > pc.sigma_th && std::abs(eig.values(j).imag()) > pc.omega_th)
      unstable_idx.push_back(j);
  }
  // One entry per conjugate pair: keep positive-frequency representatives.
  std::erase_if(unstable_idx, [&](int j) { return eig.values(j).imag() < 0.0; });
  std::sort(unstable_idx.begin(), unstable_idx.end(), [&](int a, int b) {
    if (eig.values(a).real() != eig.values(b).real())
      return eig.values(a).real() > eig.values(b).real();
    return eig.values(a).imag() < eig.values(b).imag();
  });

  for (int j : unstable_idx) {
    ModeInfo mode;
    mode.lambda = eig.values(j);
    mode.freq_hz = std::abs(mode.lambda.imag()) / (2.0 * M_PI);

    Eigen::VectorXcd vec = eig.vectors.col(j);
    // Phase convention: the largest speed-row entry is real positive.
    int imax = 0;
    double best = -1.0;
    for (int i = 0; i < ng; ++i) {
      double mag = std::abs(vec(speed_rows[i]));
      if (mag > best) {
        best = mag;
        imax = i;
      }
    }
    if (best > 0.0) vec *= std::conj(vec(speed_rows[imax])) / best;

    std::vector<int> order(ng);
    for (int i = 0; i < ng; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      double ma = std::abs(vec(speed_rows[a])), mb = std::abs(vec(speed_rows[b]));
      if (ma != mb) return ma > mb;
      return model.machines[a].case_idx < model.machines[b].case_idx;
    });
    const double scale = best > 0.0 ? best : 1.0;
    for (int i : order) {
      mode.machines.push_back(model.machines[i].case_idx);
      mode.shape_mag.push_back(std::abs(vec(speed_rows[i])) / scale);
      mode.shape_phase_deg.push_back(std::arg(vec(speed_rows[i])) * 180.0 / M_PI);
    }
    out.modes.push_back(std::move(mode));
  }
  out.unstable = !out.modes.empty();
  return out;
}

}  // namespace cascadesim
