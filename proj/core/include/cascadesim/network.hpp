#pragma once

#include <complex>
#include <vector>

#include <Eigen/SparseCore>

#include "cascadesim/case_io.hpp"

namespace cascadesim {

/// Element status vector z: branch and machine in/out flags, bus removal
/// flags, and the per-bus fraction of the original load still connected.
struct TopologyState {
  std::vector<char> branch_in;
  std::vector<char> machine_in;
  std::vector<char> bus_in;
  std::vector<double> shed_remaining;  // in [0,1], aligned with case.buses

  static TopologyState all_in(const CaseDefinition& c);
  bool consistent_with(const CaseDefinition& c) const;
};

/// Complex bus admittance plus its stacked real form
/// Y_N = [[G, -B], [B, G]] for Y = G + jB.
struct AdmittanceMatrix {
  Eigen::SparseMatrix<std::complex<double>> y;
  Eigen::SparseMatrix<double> y_real_form;  // 2m x 2m
};

struct Island {
  std::vector<int> bus_ids;        // global bus ids, ascending
  std::vector<int> branch_ids;     // case branch ids wholly inside
  std::vector<int> machine_indices;  // indices into case.machines
  bool has_generation = false;
};

struct IslandPartition {
  std::vector<Island> islands;
};

/// Bus admittance over a bus subset (local ordering = bus_ids order).
/// Out-of-service branches contribute nothing; bus shunts and branch charging
/// are included. Entries accumulate shunt first, then branch stamps in
/// ascending branch-id order, so partial recomputation reproduces full
/// rebuilds bit for bit.
AdmittanceMatrix build_ybus(const CaseDefinition& c, const TopologyState& topo,
                            const std::vector<int>& bus_ids);

/// Convenience: all in-service buses in case order.
AdmittanceMatrix build_ybus(const CaseDefinition& c, const TopologyState& topo);

/// Recompute only the entries touched by one branch's status change.
void update_ybus_for_branch(AdmittanceMatrix& adm, const CaseDefinition& c,
                            const TopologyState& topo, const std::vector<int>& bus_ids,
                            int branch_id);

Eigen::SparseMatrix<double> real_form_of(const Eigen::SparseMatrix<std::complex<double>>& y);

/// Stack a complex vector as [re; im].
Eigen::VectorXd stack_complex(const Eigen::VectorXcd& v);
Eigen::VectorXcd unstack_complex(const Eigen::VectorXd& s);

/// Y*v computed in complex arithmetic, returned stacked. The real-form
/// product Y_N * [re; im] must agree with this to 1e-12.
Eigen::VectorXd real_form_multiply_check(const AdmittanceMatrix& adm,
                                         const Eigen::VectorXcd& v);

/// Connected components over in-service branches joining in-service buses.
/// Islands without any in-service machine are flagged (has_generation=false);
/// their demand is counted as lost by the caller.
IslandPartition find_islands(const CaseDefinition& c, const TopologyState& topo);

}  // namespace cascadesim
