#pragma once

#include <Eigen/Dense>

#include "cascadesim/case_io.hpp"

namespace cascadesim {

struct PowerFlowSolution {
  Eigen::VectorXd vm;   // pu, case bus order
  Eigen::VectorXd va;   // rad
  std::vector<double> p_gen;  // pu per machine (case order)
  std::vector<double> q_gen;  // pu
  bool converged = false;
  double mismatch_inf = 0.0;  // pu, final
  int iterations = 0;
};

/// Newton power flow on the polar mismatch equations. Machine buses are
/// treated as PV at their v_set (slack per bus kind). Non-convergence is
/// reported through the flags, not thrown.
PowerFlowSolution solve_power_flow(const CaseDefinition& c, double tol = 1e-8,
                                   int max_iters = 50);

}  // namespace cascadesim
