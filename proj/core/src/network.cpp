#include "cascadesim/network.hpp"

#include <algorithm>
#include <map>
#include <queue>
#include <unordered_map>

namespace cascadesim {

using Cplx = std::complex<double>;

TopologyState TopologyState::all_in(const CaseDefinition& c) {
  TopologyState t;
  t.branch_in.assign(c.branches.size(), 1);
  for (std::size_t i = 0; i < c.branches.size(); ++i)
    t.branch_in[i] = c.branches[i].in_service ? 1 : 0;
  t.machine_in.assign(c.machines.size(), 1);
  t.bus_in.assign(c.buses.size(), 1);
  t.shed_remaining.assign(c.buses.size(), 1.0);
  return t;
}

bool TopologyState::consistent_with(const CaseDefinition& c) const {
  if (branch_in.size() != c.branches.size()) return false;
  if (machine_in.size() != c.machines.size()) return false;
  if (bus_in.size() != c.buses.size()) return false;
  if (shed_remaining.size() != c.buses.size()) return false;
  return std::all_of(shed_remaining.begin(), shed_remaining.end(),
                     [](double f) { return f >= 0.0 && f <= 1.0; });
}

namespace {

Cplx branch_series_admittance(const BranchRecord& br) {
  return 1.0 / Cplx(br.r, br.x);
}

// Accumulates the four stamps of every in-service branch incident to local
// bus rows in `want` (or all rows when `want` is empty), shunt terms first,
// branches in ascending id order.
void accumulate_entries(const CaseDefinition& c, const TopologyState& topo,
                        const std::vector<int>& bus_ids,
                        const std::unordered_map<int, int>& local,
                        const std::vector<int>& want_rows,
                        std::map<std::pair<int, int>, Cplx>& entries) {
  auto wanted = [&](int row) {
    return want_rows.empty() ||
           std::find(want_rows.begin(), want_rows.end(), row) != want_rows.end();
  };
  for (int row : want_rows.empty() ? [&] {
         std::vector<int> all(bus_ids.size());
         for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
         return all;
       }()
                                   : want_rows) {
    const BusRecord& b = c.buses[c.bus_index(bus_ids[row])];
    entries[{row, row}] += Cplx(b.g_shunt, b.b_shunt);
  }
  std::vector<std::size_t> order(c.branches.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return c.branches[a].id < c.branches[b].id;
  });
  for (std::size_t bi : order) {
    if (!topo.branch_in[bi]) continue;
    const BranchRecord& br = c.branches[bi];
    auto fit = local.find(br.from_bus);
    auto tit = local.find(br.to_bus);
    if (fit == local.end() || tit == local.end()) continue;
    int f = fit->second, t = tit->second;
    Cplx ys = branch_series_admittance(br);
    Cplx ych(0.0, br.b_charging / 2.0);
    if (wanted(f)) {
      entries[{f, f}] += ys + ych;
      entries[{f, t}] += -ys;
    }
    if (wanted(t)) {
      entries[{t, t}] += ys + ych;
      entries[{t, f}] += -ys;
    }
  }
}

Eigen::SparseMatrix<Cplx> sparse_from_entries(
    int m, const std::map<std::pair<int, int>, Cplx>& entries) {
  std::vector<Eigen::Triplet<Cplx>> trips;
  trips.reserve(entries.size());
  for (const auto& [ij, v] : entries)
    if (v != Cplx(0.0, 0.0)) trips.emplace_back(ij.first, ij.second, v);
  Eigen::SparseMatrix<Cplx> y(m, m);
  y.setFromTriplets(trips.begin(), trips.end());
  return y;
}

}  // namespace

Eigen::SparseMatrix<double> real_form_of(const Eigen::SparseMatrix<Cplx>& y) {
  const int m = static_cast<int>(y.rows());
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(4 * y.nonZeros());
  for (int k = 0; k < y.outerSize(); ++k) {
    for (Eigen::SparseMatrix<Cplx>::InnerIterator it(y, k); it; ++it) {
      const int i = static_cast<int>(it.row());
      const int j = static_cast<int>(it.col());
      const double g = it.value().real();
      const double b = it.value().imag();
      trips.emplace_back(i, j, g);
      trips.emplace_back(i, m + j, -b);
      trips.emplace_back(m + i, j, b);
      trips.emplace_back(m + i, m + j, g);
    }
  }
  Eigen::SparseMatrix<double> yn(2 * m, 2 * m);
  yn.setFromTriplets(trips.begin(), trips.end());
  return yn;
}

AdmittanceMatrix build_ybus(const CaseDefinition& c, const TopologyState& topo,
                            const std::vector<int>& bus_ids) {
  std::unordered_map<int, int> local;
  for (std::size_t i = 0; i < bus_ids.size(); ++i) local[bus_ids[i]] = static_cast<int>(i);
  std::map<std::pair<int, int>, Cplx> entries;
  accumulate_entries(c, topo, bus_ids, local, {}, entries);
  AdmittanceMatrix adm;
  adm.y = sparse_from_entries(static_cast<int>(bus_ids.size()), entries);
  adm.y_real_form = real_form_of(adm.y);
  return adm;
}

AdmittanceMatrix build_ybus(const CaseDefinition& c, const TopologyState& topo) {
  std::vector<int> ids;
  for (std::size_t i = 0; i < c.buses.size(); ++i)
    if (topo.bus_in[i]) ids.push_back(c.buses[i].id);
  return build_ybus(c, topo, ids);
}

void update_ybus_for_branch(AdmittanceMatrix& adm, const CaseDefinition& c,
                            const TopologyState& topo, const std::vector<int>& bus_ids,
                            int branch_id) {
  std::unordered_map<int, int> local;
  for (std::size_t i = 0; i < bus_ids.size(); ++i) local[bus_ids[i]] = static_cast<int>(i);
  const BranchRecord* br = nullptr;
  for (const auto& b : c.branches)
    if (b.id == branch_id) br = &b;
  if (!br) return;
  auto fit = local.find(br->from_bus);
  auto tit = local.find(br->to_bus);
  if (fit == local.end() || tit == local.end()) return;
  std::map<std::pair<int, int>, Cplx> entries;
  accumulate_entries(c, topo, bus_ids, local, {fit->second, tit->second}, entries);
  // Keep untouched rows, replace the two terminal rows with the recomputed
  // accumulation so values match a full rebuild bit for bit.
  std::map<std::pair<int, int>, Cplx> merged;
  for (int k = 0; k < adm.y.outerSize(); ++k)
    for (Eigen::SparseMatrix<Cplx>::InnerIterator it(adm.y, k); it; ++it) {
      int i = static_cast<int>(it.row());
      if (i == fit->second || i == tit->second) continue;
      merged[{i, static_cast<int>(it.col())}] = it.value();
    }
  for (const auto& [ij, v] : entries) merged[ij] = v;
  adm.y = sparse_from_entries(static_cast<int>(bus_ids.size()), merged);
  adm.y_real_form = real_form_of(adm.y);
}

Eigen::VectorXd stack_complex(const Eigen::VectorXcd& v) {
  Eigen::VectorXd s(2 * v.size());
  s.head(v.size()) = v.real();
  s.tail(v.size()) = v.imag();
  return s;
}

Eigen::VectorXcd unstack_complex(const Eigen::VectorXd& s) {
  const auto m = s.size() / 2;
  Eigen::VectorXcd v(m);
  v.real() = s.head(m);
  v.imag() = s.tail(m);
  return v;
}

Eigen::VectorXd real_form_multiply_check(const AdmittanceMatrix& adm,
                                         const Eigen::VectorXcd& v) {
  return stack_complex(adm.y * v);
}

IslandPartition find_islands(const CaseDefinition& c, const TopologyState& topo) {
  const int nb = static_cast<int>(c.buses.size());
  std::unordered_map<int, int> idx_of_id;
  for (int i = 0; i < nb; ++i) idx_of_id[c.buses[i].id] = i;
  std::vector<std::vector<std::pair<int, int>>> adj(nb);  // (neighbor bus idx, branch idx)
  for (std::size_t bi = 0; bi < c.branches.size(); ++bi) {
    if (!topo.branch_in[bi]) continue;
    int f = idx_of_id.at(c.branches[bi].from_bus);
    int t = idx_of_id.at(c.branches[bi].to_bus);
    if (!topo.bus_in[f] || !topo.bus_in[t]) continue;
    adj[f].emplace_back(t, static_cast<int>(bi));
    adj[t].emplace_back(f, static_cast<int>(bi));
  }
  std::vector<int> comp(nb, -1);
  IslandPartition part;
  for (int start = 0; start < nb; ++start) {
    if (!topo.bus_in[start] || comp[start] >= 0) continue;
    int cid = static_cast<int>(part.islands.size());
    Island isl;
    std::queue<int> q;
    q.push(start);
    comp[start] = cid;
    while (!q.empty()) {
      int u = q.front();
      q.pop();
      isl.bus_ids.push_back(c.buses[u].id);
      for (auto [v, bi] : adj[u]) {
        (void)bi;
        if (comp[v] < 0) {
          comp[v] = cid;
          q.push(v);
        }
      }
    }
    std::sort(isl.bus_ids.begin(), isl.bus_ids.end());
    part.islands.push_back(std::move(isl));
  }
  for (std::size_t bi = 0; bi < c.branches.size(); ++bi) {
    if (!topo.branch_in[bi]) continue;
    int f = idx_of_id.at(c.branches[bi].from_bus);
    if (!topo.bus_in[f]) continue;
    if (comp[f] >= 0) part.islands[comp[f]].branch_ids.push_back(c.branches[bi].id);
  }
  for (std::size_t mi = 0; mi < c.machines.size(); ++mi) {
    if (!topo.machine_in[mi]) continue;
    int b = idx_of_id.at(c.machines[mi].bus);
    if (!topo.bus_in[b] || comp[b] < 0) continue;
    part.islands[comp[b]].machine_indices.push_back(static_cast<int>(mi));
    part.islands[comp[b]].has_generation = true;
  }
  return part;
}

}  // namespace cascadesim
