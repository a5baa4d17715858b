#include "cascadesim/integrators.hpp"

#include <algorithm>

#include <Eigen/SparseLU>

namespace cascadesim {

DaeStepProblem::DaeStepProblem(const IslandModel& model, const SystemState& prev, double dt,
                               Method method)
    : model_(&model), x_n_(prev.x), dt_(dt), method_(method) {
  if (method_ == Method::TM) f_n_ = eval_f(model, prev.x, prev.v);
}

void DaeStepProblem::residual(const Eigen::VectorXd& x, const Eigen::VectorXd& v,
                              Eigen::VectorXd& f_out, Eigen::VectorXd& g_out) const {
  if (method_ == Method::TM) {
    f_out = x - x_n_ - (dt_ / 2.0) * (eval_f(*model_, x, v) + f_n_);
  } else {
    f_out = x - x_n_ - dt_ * eval_f(*model_, x, v);
  }
  g_out = algebraic_residual(*model_, x, v);
}

JacobianBlocks DaeStepProblem::jacobian(const Eigen::VectorXd& x,
                                        const Eigen::VectorXd& v) const {
  return assemble_jacobian(*model_, x, v, dt_, method_);
}

double DaeStepProblem::step_control_norm(const Eigen::VectorXd& f_resid) const {
  double n = 0.0;
  const int skip = model_->off_delta_coi();
  for (int i = 0; i < f_resid.size(); ++i)
    if (i != skip) n = std::max(n, std::abs(f_resid(i)));
  return n;
}

StepResult newton_step(const ImplicitStepProblem& problem, const Eigen::VectorXd& x0,
                       const Eigen::VectorXd& v0, const IntegratorConfig& cfg) {
  const int n = problem.n_diff();
  const int na = problem.n_alg();
  StepResult res;
  res.x = x0;
  res.v = v0;

  Eigen::VectorXd f, g;
  for (int it = 0; it <= cfg.max_newton_iters; ++it) {
    problem.residual(res.x, res.v, f, g);
    double mis = f.lpNorm<Eigen::Infinity>();
    if (na > 0) mis = std::max(mis, g.lpNorm<Eigen::Infinity>());
    if (it == 0) res.first_mismatch_inf = problem.step_control_norm(f);
    res.mismatch_inf = mis;
    res.iterations = it;
    if (!std::isfinite(mis)) return res;
    if (mis <= cfg.eps) {
      res.converged = true;
      return res;
    }
    if (it == cfg.max_newton_iters) break;

    JacobianBlocks B = problem.jacobian(res.x, res.v);
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(B.j11.nonZeros() + B.j12.nonZeros() + B.j21.nonZeros() + B.j22.nonZeros());
    auto add_block = [&trips](const Eigen::SparseMatrix<double>& blk, int r0, int c0) {
      for (int k = 0; k < blk.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator jt(blk, k); jt; ++jt)
          trips.emplace_back(r0 + static_cast<int>(jt.row()), c0 + static_cast<int>(jt.col()),
                             jt.value());
    };
    add_block(B.j11, 0, 0);
    if (na > 0) {
      add_block(B.j12, 0, n);
      add_block(B.j21, n, 0);
      add_block(B.j22, n, n);
    }
    Eigen::SparseMatrix<double> jac(n + na, n + na);
    jac.setFromTriplets(trips.begin(), trips.end());

    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(jac);
    if (lu.info() != Eigen::Success) throw SingularJacobianError("singular step Jacobian");
    Eigen::VectorXd rhs(n + na);
    rhs.head(n) = -f;
    if (na > 0) rhs.tail(na) = -g;
    Eigen::VectorXd delta = lu.solve(rhs);
    if (!delta.allFinite()) return res;
    res.x += delta.head(n);
    if (na > 0) res.v += delta.tail(na);
  }
  return res;
}

StepResult step_tm(const IslandModel& model, const SystemState& prev, double dt,
                   const IntegratorConfig& cfg) {
  DaeStepProblem p(model, prev, dt, Method::TM);
  StepResult r = newton_step(p, prev.x, prev.v, cfg);
  r.dt_taken = dt;
  return r;
}

StepResult step_bem(const IslandModel& model, const SystemState& prev, double dt,
                    const IntegratorConfig& cfg) {
  DaeStepProblem p(model, prev, dt, Method::BEM);
  StepResult r = newton_step(p, prev.x, prev.v, cfg);
  r.dt_taken = dt;
  return r;
}

double adapt_step_bem(double dt_n, double first_mismatch_inf, const IntegratorConfig& cfg) {
  if (first_mismatch_inf <= 0.0) return cfg.dt_max;
  const double dt = dt_n * cfg.tau / first_mismatch_inf;
  return std::clamp(dt, cfg.dt_min, cfg.dt_max);
}

double adapt_step_tm(double lte_estimate, double dt_n, const IntegratorConfig& cfg) {
  double factor;
  if (lte_estimate <= 0.0) {
    factor = 2.0;
  } else {
    factor = 0.9 * std::sqrt(cfg.tm_lte_target / lte_estimate);
    factor = std::clamp(factor, 0.2, 2.0);
  }
  return std::clamp(dt_n * factor, cfg.tm_dt_min, cfg.tm_dt_max);
}

bool tm_step_rejected(double lte_estimate, const IntegratorConfig& cfg) {
  return lte_estimate > cfg.tm_reject_factor * cfg.tm_lte_target;
}

double tm_lte_estimate(const IslandModel& model, const SystemState& prev,
                       const StepResult& res) {
  Eigen::VectorXd f_n = eval_f(model, prev.x, prev.v);
  Eigen::VectorXd predictor = prev.x + res.dt_taken * f_n;
  return (res.x - predictor).lpNorm<Eigen::Infinity>();
}

StepResult step_rk4_partitioned(const IslandModel& model, const SystemState& prev,
                                double dt, const IntegratorConfig& cfg) {
  StepResult res;
  res.dt_taken = dt;
  Eigen::VectorXd v = prev.v;

  auto stage = [&](const Eigen::VectorXd& x, Eigen::VectorXd& k_out) -> bool {
    if (!resolve_algebraic(model, x, v, cfg.eps, cfg.max_newton_iters)) return false;
    k_out = eval_f(model, x, v);
    return k_out.allFinite();
  };

  Eigen::VectorXd k1, k2, k3, k4;
  bool ok = stage(prev.x, k1) && stage(prev.x + 0.5 * dt * k1, k2) &&
            stage(prev.x + 0.5 * dt * k2, k3) && stage(prev.x + dt * k3, k4);
  res.x = prev.x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  res.v = v;
  res.converged = ok && res.x.allFinite();
  if (res.converged) {
    res.mismatch_inf = algebraic_residual(model, res.x, res.v).lpNorm<Eigen::Infinity>();
    // Land the algebraic variables on the final state.
    if (!resolve_algebraic(model, res.x, res.v, cfg.eps, cfg.max_newton_iters))
      res.converged = false;
  }
  return res;
}

}  // namespace cascadesim
