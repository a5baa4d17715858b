#pragma once

#include <Eigen/Dense>

#include "cascadesim/dae.hpp"

namespace cascadesim {

/// Frame quantities recorded while re-initializing a child island from its
/// parent: the parent and child COI angles/speeds and the per-machine
/// absolute rotor angles and speed deviations recovered in the universal
/// network frame.
struct FrameTransfer {
  double parent_delta_coi = 0.0, parent_dw_coi = 0.0;
  double child_delta_coi = 0.0, child_dw_coi = 0.0;
  Eigen::VectorXd delta_abs;  // per child machine
  Eigen::VectorXd dw_abs;
};

struct ChildInit {
  IslandModel model;
  SystemState state;
  FrameTransfer frame;
  bool resolved = false;  // algebraic re-solve at t_n succeeded
};

/// Re-initialize one child island from the parent's converged state at t_n:
/// recover absolute angles/speeds in the network frame, re-frame them onto
/// the child's own COI, leave device states untouched, rotate and re-solve
/// the child's voltages, and hand back a state ready to act as the next
/// step's initial guess. Children with no machines are not valid inputs.
ChildInit reinitialize_child(const CaseDefinition& c, const TopologyState& topo,
                             const Island& child, const IslandModel& parent,
                             const SystemState& parent_state, double alg_tol = 1e-8);

}  // namespace cascadesim
