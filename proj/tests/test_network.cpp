#include <doctest.h>

#include <complex>
#include <numeric>
#include <random>

#include "cascadesim/case_io.hpp"
#include "cascadesim/cases_builtin.hpp"
#include "cascadesim/network.hpp"

using namespace cascadesim;
using Cplx = std::complex<double>;

TEST_CASE("all branches out leaves only shunt terms") {
  CaseDefinition c = make_nine_bus_case();
  c.buses[4].g_shunt = 0.1;
  c.buses[4].b_shunt = 0.25;
  auto topo = TopologyState::all_in(c);
  std::fill(topo.branch_in.begin(), topo.branch_in.end(), 0);
  auto adm = build_ybus(c, topo);
  CHECK(adm.y.nonZeros() == 1);
  CHECK(Cplx(adm.y.coeff(4, 4)) == Cplx(0.1, 0.25));
}

TEST_CASE("single series branch stamps by hand") {
  CaseDefinition c = make_two_bus_case(0.0, 0.0, 0.1);
  auto topo = TopologyState::all_in(c);
  auto adm = build_ybus(c, topo);
  CHECK(adm.y.coeff(0, 1) == Cplx(0.0, 10.0));   // -1/(j0.1) = j10
  CHECK(adm.y.coeff(1, 0) == Cplx(0.0, 10.0));
  CHECK(adm.y.coeff(0, 0) == Cplx(0.0, -10.0));
  CHECK(adm.y.coeff(1, 1) == Cplx(0.0, -10.0));
}

TEST_CASE("branch trip changes exactly four complex entries, bit-for-bit") {
  CaseDefinition c = make_nine_bus_case();
  auto topo = TopologyState::all_in(c);
  auto before = build_ybus(c, topo);

  const int trip_id = 6;  // line 5-7
  TopologyState topo2 = topo;
  for (std::size_t i = 0; i < c.branches.size(); ++i)
    if (c.branches[i].id == trip_id) topo2.branch_in[i] = 0;
  auto full = build_ybus(c, topo2);

  std::vector<int> bus_ids;
  for (const auto& b : c.buses) bus_ids.push_back(b.id);
  AdmittanceMatrix incremental = before;
  update_ybus_for_branch(incremental, c, topo2, bus_ids, trip_id);

  int changed = 0;
  for (int i = 0; i < 9; ++i)
    for (int j = 0; j < 9; ++j)
      if (Cplx(before.y.coeff(i, j)) != Cplx(full.y.coeff(i, j))) ++changed;
  CHECK(changed == 4);

  for (int i = 0; i < 9; ++i)
    for (int j = 0; j < 9; ++j) {
      Cplx a = incremental.y.coeff(i, j);
      Cplx b = full.y.coeff(i, j);
      CHECK(a.real() == b.real());
      CHECK(a.imag() == b.imag());
    }
}

TEST_CASE("real-form product equals complex multiply") {
  CaseDefinition c = make_ring39_case();
  auto topo = TopologyState::all_in(c);
  auto adm = build_ybus(c, topo);
  const int m = static_cast<int>(adm.y.rows());

  SUBCASE("zero vector") {
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(m);
    CHECK(real_form_multiply_check(adm, v).norm() == 0.0);
    CHECK((adm.y_real_form * stack_complex(v)).norm() == 0.0);
  }
  SUBCASE("unit vector probes a column") {
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(m);
    v(3) = 1.0;
    Eigen::VectorXd got = adm.y_real_form * stack_complex(v);
    for (int i = 0; i < m; ++i) {
      CHECK(got(i) == doctest::Approx(adm.y.coeff(i, 3).real()).epsilon(1e-14));
      CHECK(got(m + i) == doctest::Approx(adm.y.coeff(i, 3).imag()).epsilon(1e-14));
    }
  }
  SUBCASE("random vectors agree to 1e-12") {
    std::mt19937 rng(99);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
      Eigen::VectorXcd v(m);
      for (int i = 0; i < m; ++i) v(i) = Cplx(u(rng), u(rng));
      Eigen::VectorXd complex_route = real_form_multiply_check(adm, v);
      Eigen::VectorXd stacked_route = adm.y_real_form * stack_complex(v);
      CHECK((complex_route - stacked_route).lpNorm<Eigen::Infinity>() <= 1e-12);
    }
  }
}

namespace {

// Independent union-find oracle for connectivity.
struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int a) { return parent[a] == a ? a : parent[a] = find(parent[a]); }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace

TEST_CASE("fully connected network is one island") {
  CaseDefinition c = make_ring39_case();
  auto topo = TopologyState::all_in(c);
  auto part = find_islands(c, topo);
  CHECK(part.islands.size() == 1);
  CHECK(part.islands[0].bus_ids.size() == 39);
  CHECK(part.islands[0].has_generation);
}

TEST_CASE("cutting the tie of a two-cluster network yields the right bus sets") {
  CaseDefinition c = make_two_cluster_case();
  auto topo = TopologyState::all_in(c);
  for (std::size_t i = 0; i < c.branches.size(); ++i)
    if (c.branches[i].id == 100) topo.branch_in[i] = 0;
  auto part = find_islands(c, topo);
  REQUIRE(part.islands.size() == 2);
  CHECK(part.islands[0].bus_ids == std::vector<int>{1, 2, 3, 4, 5});
  CHECK(part.islands[1].bus_ids == std::vector<int>{6, 7, 8, 9, 10});
  CHECK(part.islands[0].has_generation);
  CHECK(part.islands[1].has_generation);
}

TEST_CASE("load-only island is flagged de-energized") {
  CaseDefinition c = make_two_cluster_case();
  auto topo = TopologyState::all_in(c);
  // Cut the tie and trip both machines of cluster B.
  for (std::size_t i = 0; i < c.branches.size(); ++i)
    if (c.branches[i].id == 100) topo.branch_in[i] = 0;
  for (std::size_t mi = 0; mi < c.machines.size(); ++mi)
    if (c.machines[mi].bus >= 6) topo.machine_in[mi] = 0;
  auto part = find_islands(c, topo);
  REQUIRE(part.islands.size() == 2);
  CHECK(part.islands[0].has_generation);
  CHECK_FALSE(part.islands[1].has_generation);
  CHECK(part.islands[1].machine_indices.empty());
}

TEST_CASE("island detection matches a union-find oracle on random topologies") {
  CaseDefinition c = parse_case(make_grid118_table_text());
  std::mt19937 rng(2024);
  std::bernoulli_distribution keep(0.8);
  for (int trial = 0; trial < 1000; ++trial) {
    auto topo = TopologyState::all_in(c);
    for (auto& v : topo.branch_in) v = keep(rng) ? 1 : 0;

    auto part = find_islands(c, topo);

    UnionFind uf(static_cast<int>(c.buses.size()));
    for (std::size_t bi = 0; bi < c.branches.size(); ++bi) {
      if (!topo.branch_in[bi]) continue;
      uf.unite(c.bus_index(c.branches[bi].from_bus), c.bus_index(c.branches[bi].to_bus));
    }
    std::map<int, std::vector<int>> groups;
    for (std::size_t i = 0; i < c.buses.size(); ++i)
      groups[uf.find(static_cast<int>(i))].push_back(c.buses[i].id);
    std::vector<std::vector<int>> oracle;
    for (auto& [root, ids] : groups) {
      std::sort(ids.begin(), ids.end());
      oracle.push_back(ids);
    }
    std::sort(oracle.begin(), oracle.end());

    std::vector<std::vector<int>> got;
    for (const auto& isl : part.islands) got.push_back(isl.bus_ids);
    std::sort(got.begin(), got.end());
    REQUIRE(got == oracle);
  }
}
