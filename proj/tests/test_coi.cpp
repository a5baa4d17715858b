#include <doctest.h>

#include <cmath>
#include <complex>

#include "cascadesim/coi.hpp"
#include "support/fixtures.hpp"

using namespace cascadesim;
using testsupport::init_system;

namespace {

// Network-frame voltage phasor of a local bus.
std::complex<double> net_frame_voltage(const IslandModel& m, const SystemState& st, int local) {
  std::complex<double> v(st.v(local), st.v(m.n_bus() + local));
  return v * std::polar(1.0, st.x(m.off_delta_coi()));
}

double airgap_power(const IslandModel& m, const SystemState& st, int mi) {
  const auto& mc = m.machines[mi];
  const int nb = m.n_bus();
  const double th = st.x(m.off(mi, IslandModel::kTheta));
  const double s = std::sin(th), c = std::cos(th);
  const double vre = st.v(mc.local_bus), vim = st.v(nb + mc.local_bus);
  const double vd = vre * s - vim * c, vq = vre * c + vim * s;
  const double id = (st.x(m.off(mi, IslandModel::kEqp)) - vq) / mc.xdp;
  const double iq = (vd - st.x(m.off(mi, IslandModel::kEdp))) / mc.xqp;
  return st.x(m.off(mi, IslandModel::kEdp)) * id + st.x(m.off(mi, IslandModel::kEqp)) * iq +
         (mc.xqp - mc.xdp) * id * iq;
}

}  // namespace

TEST_CASE("identity partition leaves state untouched") {
  auto sys = init_system(make_two_cluster_case(), 5);
  Island whole;
  whole.bus_ids = sys.model.bus_ids;
  for (const auto& br : sys.model.branches) whole.branch_ids.push_back(br.id);
  for (const auto& mc : sys.model.machines) whole.machine_indices.push_back(mc.case_idx);
  whole.has_generation = true;

  ChildInit init = reinitialize_child(sys.case_def, sys.topo, whole, sys.model, sys.state);
  REQUIRE(init.resolved);
  CHECK((init.state.x - sys.state.x).lpNorm<Eigen::Infinity>() <= 1e-12);
  CHECK((init.state.v - sys.state.v).lpNorm<Eigen::Infinity>() <= 1e-10);
}

TEST_CASE("split of the two-cluster system re-frames both children") {
  auto sys = init_system(make_two_cluster_case(), 5);

  // Give the parent a nonzero frame and nonuniform machine states so the
  // re-framing actually has work to do.
  SystemState parent = sys.state;
  parent.x(sys.model.off_delta_coi()) = 0.3;
  parent.x(sys.model.off_dw_coi()) = 0.002;
  for (int i = 0; i < sys.model.n_mach(); ++i)
    parent.x(sys.model.off(i, IslandModel::kDw)) += 0.001 * (i - 1.5);

  TopologyState cut = sys.topo;
  for (std::size_t i = 0; i < sys.case_def.branches.size(); ++i)
    if (sys.case_def.branches[i].id == 100) cut.branch_in[i] = 0;
  auto part = find_islands(sys.case_def, cut);
  REQUIRE(part.islands.size() == 2);

  std::vector<ChildInit> kids;
  for (const auto& child : part.islands)
    kids.push_back(reinitialize_child(sys.case_def, cut, child, sys.model, parent, 1e-8));

  for (const auto& kid : kids) {
    REQUIRE(kid.resolved);
    // H-weighted means vanish exactly after Step II.
    double s_th = 0.0, s_dw = 0.0;
    for (int i = 0; i < kid.model.n_mach(); ++i) {
      s_th += kid.model.machines[i].h * kid.state.x(kid.model.off(i, IslandModel::kTheta));
      s_dw += kid.model.machines[i].h * kid.state.x(kid.model.off(i, IslandModel::kDw));
    }
    CHECK(std::abs(s_th) <= 1e-9 * kid.model.h_total);
    CHECK(std::abs(s_dw) <= 1e-9 * kid.model.h_total);

    // Child satisfies its own algebraic equations at t_n.
    CHECK(algebraic_residual(kid.model, kid.state.x, kid.state.v).lpNorm<Eigen::Infinity>() <=
          1e-8);

    // Recovered absolute rotor angles match the parent's (Step I inverted on
    // the child frame).
    for (int i = 0; i < kid.model.n_mach(); ++i) {
      const double child_abs = kid.state.x(kid.model.off(i, IslandModel::kTheta)) +
                               kid.state.x(kid.model.off_delta_coi());
      // find the machine in the parent
      for (int p = 0; p < sys.model.n_mach(); ++p) {
        if (sys.model.machines[p].case_idx != kid.model.machines[i].case_idx) continue;
        const double parent_abs = parent.x(sys.model.off(p, IslandModel::kTheta)) +
                                  parent.x(sys.model.off_delta_coi());
        CHECK(child_abs == doctest::Approx(parent_abs).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("re-framing is physically invisible when topology is unchanged") {
  auto sys = init_system(make_two_cluster_case(), 5);
  SystemState parent = sys.state;
  parent.x(sys.model.off_delta_coi()) = 0.17;

  // Re-frame onto a "child" that is the whole island; only the frame angle
  // may change, not any physical quantity.
  Island whole;
  whole.bus_ids = sys.model.bus_ids;
  for (const auto& br : sys.model.branches) whole.branch_ids.push_back(br.id);
  for (const auto& mc : sys.model.machines) whole.machine_indices.push_back(mc.case_idx);
  whole.has_generation = true;
  ChildInit init = reinitialize_child(sys.case_def, sys.topo, whole, sys.model, parent);
  REQUIRE(init.resolved);

  for (int k = 0; k < sys.model.n_bus(); ++k) {
    auto before = net_frame_voltage(sys.model, parent, k);
    auto after = net_frame_voltage(init.model, init.state, k);
    CHECK(std::abs(before - after) <= 1e-10);
  }
  for (int i = 0; i < sys.model.n_mach(); ++i) {
    CHECK(std::abs(airgap_power(sys.model, parent, i) -
                   airgap_power(init.model, init.state, i)) <= 1e-10);
  }
}

TEST_CASE("single-machine child is degenerate but well posed") {
  auto sys = init_system(make_two_bus_case(40.0, 10.0), 8);
  Island whole;
  whole.bus_ids = sys.model.bus_ids;
  for (const auto& br : sys.model.branches) whole.branch_ids.push_back(br.id);
  whole.machine_indices = {0};
  whole.has_generation = true;

  SystemState parent = sys.state;
  parent.x(sys.model.off(0, IslandModel::kDw)) = 0.0;
  parent.x(sys.model.off_dw_coi()) = 0.004;

  ChildInit init = reinitialize_child(sys.case_def, sys.topo, whole, sys.model, parent);
  REQUIRE(init.resolved);
  CHECK(init.state.x(init.model.off(0, IslandModel::kTheta)) == doctest::Approx(0.0));
  CHECK(init.state.x(init.model.off(0, IslandModel::kDw)) == doctest::Approx(0.0));
  CHECK(init.state.x(init.model.off_dw_coi()) == doctest::Approx(0.004));
}
