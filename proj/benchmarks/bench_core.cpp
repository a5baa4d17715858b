#include <benchmark/benchmark.h>

#include "cascadesim/cases_builtin.hpp"
#include "cascadesim/engine.hpp"
#include "cascadesim/modal.hpp"

using namespace cascadesim;

namespace {

struct Rig {
  CaseDefinition c;
  TopologyState topo;
  IslandModel model;
  SystemState state;
  Rig() {
    c = synthesize_dynamics(make_ring39_case(), 2026);
    topo = TopologyState::all_in(c);
    auto part = find_islands(c, topo);
    auto pf = solve_power_flow(c);
    auto islands = initialize_islands(c, topo, part, pf);
    model = std::move(islands[0].first);
    state = std::move(islands[0].second);
    // off-equilibrium so Newton actually iterates
    state.x(model.off(1, IslandModel::kTheta)) += 0.05;
    resolve_algebraic(model, state.x, state.v, 1e-10, 30);
  }
};

Rig& rig() {
  static Rig r;
  return r;
}

}  // namespace

static void BM_StepBEM(benchmark::State& state) {
  auto& r = rig();
  IntegratorConfig cfg;
  for (auto _ : state) {
    auto res = step_bem(r.model, r.state, 0.1, cfg);
    benchmark::DoNotOptimize(res.x);
  }
}
BENCHMARK(BM_StepBEM);

static void BM_StepTM(benchmark::State& state) {
  auto& r = rig();
  IntegratorConfig cfg;
  for (auto _ : state) {
    auto res = step_tm(r.model, r.state, 0.02, cfg);
    benchmark::DoNotOptimize(res.x);
  }
}
BENCHMARK(BM_StepTM);

static void BM_StepRK4Partitioned(benchmark::State& state) {
  auto& r = rig();
  IntegratorConfig cfg;
  for (auto _ : state) {
    auto res = step_rk4_partitioned(r.model, r.state, 0.002, cfg);
    benchmark::DoNotOptimize(res.x);
  }
}
BENCHMARK(BM_StepRK4Partitioned);

static void BM_YbusRebuild(benchmark::State& state) {
  auto& r = rig();
  for (auto _ : state) {
    auto adm = build_ybus(r.c, r.topo);
    benchmark::DoNotOptimize(adm.y);
  }
}
BENCHMARK(BM_YbusRebuild);

static void BM_JacobianAssembly(benchmark::State& state) {
  auto& r = rig();
  for (auto _ : state) {
    auto blocks = assemble_jacobian(r.model, r.state.x, r.state.v, 0.1, Method::BEM);
    benchmark::DoNotOptimize(blocks.j22);
  }
}
BENCHMARK(BM_JacobianAssembly);

static void BM_AMatrixAndEigen(benchmark::State& state) {
  auto& r = rig();
  auto blocks = assemble_jacobian(r.model, r.state.x, r.state.v, 0.1, Method::BEM);
  for (auto _ : state) {
    auto a = build_a_matrix(blocks, 0.1);
    auto eig = eigendecompose(a);
    benchmark::DoNotOptimize(eig.values);
  }
}
BENCHMARK(BM_AMatrixAndEigen);

BENCHMARK_MAIN();
