#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "cascadesim/config.hpp"
#include "cascadesim/dae.hpp"

namespace cascadesim {

struct EquilibriumResult {
  SystemState settled;
  double t_elapsed = 0.0;
  bool settled_ok = false;
  JacobianBlocks jac;       // captured at (x*, V*) with the final step's dt
  double dt_final = 0.0;
};

struct LinearizedModel {
  Eigen::MatrixXd a;
  Eigen::VectorXcd eigenvalues;
  Eigen::MatrixXcd eigenvectors;  // right, unit norm, speed-row phase convention
};

struct ModeInfo {
  std::complex<double> lambda;
  double freq_hz = 0.0;
  // (case machine idx, |modeshape| normalized to the largest, phase deg),
  // sorted by magnitude descending with machine-id tiebreak.
  std::vector<int> machines;
  std::vector<double> shape_mag;
  std::vector<double> shape_phase_deg;
};

struct InstabilityVerdict {
  bool unstable = false;
  std::vector<ModeInfo> modes;  // unstable oscillatory modes, most unstable first
};

/// Relay-free variable-step BEM run from a tier snapshot until the machine
/// speed variation inside the settle window drops below tolerance (or the
/// cap). Chases the post-event equilibrium, including unstable ones.
EquilibriumResult settle_equilibrium(const IslandModel& model, const SystemState& start,
                                     const IntegratorConfig& integ, const PcConfig& pc);

/// A = P11 + P12 P22^{-1} P21 with P11 = (I - J11)/dt, P12 = -J12/dt,
/// P21 = -J21, P22 = J22; the inverse is applied through a sparse
/// factorization, never formed.
Eigen::MatrixXd build_a_matrix(const JacobianBlocks& blocks, double dt);

struct Eigensystem {
  Eigen::VectorXcd values;
  Eigen::MatrixXcd vectors;
};

/// Dense nonsymmetric eigendecomposition. Eigenvectors are normalized to
/// unit 2-norm; the caller applies the speed-row phase convention.
Eigensystem eigendecompose(const Eigen::MatrixXd& a);

/// Oscillatory instability: any eigenvalue with Re > sigma_th and
/// |Im| > omega_th. Machines are ranked by |modeshape| on their speed rows.
InstabilityVerdict detect_and_rank(const Eigensystem& eig, const IslandModel& model,
                                   const PcConfig& pc);

}  // namespace cascadesim
