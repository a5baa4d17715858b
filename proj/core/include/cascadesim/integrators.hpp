#pragma once

#include <functional>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "cascadesim/config.hpp"
#include "cascadesim/dae.hpp"

namespace cascadesim {

struct StepResult {
  Eigen::VectorXd x, v;
  int iterations = 0;
  bool converged = false;
  double mismatch_inf = std::numeric_limits<double>::infinity();
  double first_mismatch_inf = 0.0;  // ||F||_inf of the differential part at iterate 0
  double dt_taken = 0.0;
};

struct SingularJacobianError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One discretized integration step posed as nonlinear algebraic equations.
/// Implementations bake in (x_n, V_n, dt, method).
class ImplicitStepProblem {
 public:
  virtual ~ImplicitStepProblem() = default;
  virtual int n_diff() const = 0;
  virtual int n_alg() const = 0;
  virtual void residual(const Eigen::VectorXd& x, const Eigen::VectorXd& v,
                        Eigen::VectorXd& f_out, Eigen::VectorXd& g_out) const = 0;
  virtual JacobianBlocks jacobian(const Eigen::VectorXd& x, const Eigen::VectorXd& v) const = 0;
  /// Norm of the differential mismatch used by the step controller. The
  /// default takes the whole vector; DAE problems exclude pure-integrator
  /// rows (the COI frame angle) whose mismatch carries no curvature
  /// information.
  virtual double step_control_norm(const Eigen::VectorXd& f_resid) const {
    return f_resid.size() ? f_resid.lpNorm<Eigen::Infinity>() : 0.0;
  }
};

/// TM/BEM step problem on an island DAE.
class DaeStepProblem final : public ImplicitStepProblem {
 public:
  DaeStepProblem(const IslandModel& model, const SystemState& prev, double dt, Method method);
  int n_diff() const override { return model_->n_diff(); }
  int n_alg() const override { return model_->n_alg(); }
  void residual(const Eigen::VectorXd& x, const Eigen::VectorXd& v, Eigen::VectorXd& f_out,
                Eigen::VectorXd& g_out) const override;
  JacobianBlocks jacobian(const Eigen::VectorXd& x, const Eigen::VectorXd& v) const override;
  double step_control_norm(const Eigen::VectorXd& f_resid) const override;

 private:
  const IslandModel* model_;
  Eigen::VectorXd x_n_;
  Eigen::VectorXd f_n_;  // f(x_n, V_n), used by TM
  double dt_;
  Method method_;
};

/// Full Newton with a sparse direct factorization of the stacked block
/// system. Stops on ||[F;G]||_inf <= eps or the iteration cap.
StepResult newton_step(const ImplicitStepProblem& problem, const Eigen::VectorXd& x0,
                       const Eigen::VectorXd& v0, const IntegratorConfig& cfg);

StepResult step_tm(const IslandModel& model, const SystemState& prev, double dt,
                   const IntegratorConfig& cfg);
StepResult step_bem(const IslandModel& model, const SystemState& prev, double dt,
                    const IntegratorConfig& cfg);

/// dt_{n+1} = clamp(dt_n * tau / ||F0||_inf); an exactly zero mismatch
/// returns dt_max.
double adapt_step_bem(double dt_n, double first_mismatch_inf, const IntegratorConfig& cfg);

/// Bounded-factor controller keeping the TM local-truncation estimate near
/// target; grows at most 2x, shrinks at most 5x per step.
double adapt_step_tm(double lte_estimate, double dt_n, const IntegratorConfig& cfg);

/// Reject threshold used by the TM driver.
bool tm_step_rejected(double lte_estimate, const IntegratorConfig& cfg);

/// Forward-Euler comparison estimate of the TM local truncation error.
double tm_lte_estimate(const IslandModel& model, const SystemState& prev,
                       const StepResult& res);

/// Partitioned explicit comparator: classical RK4 on the differential states
/// with the algebraic equations re-solved (Newton on G via J22) at every
/// stage. Stage non-convergence or a non-finite state flags converged=false.
StepResult step_rk4_partitioned(const IslandModel& model, const SystemState& prev,
                                double dt, const IntegratorConfig& cfg);

}  // namespace cascadesim
