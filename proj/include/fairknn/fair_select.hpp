// Copyright 2026 The fairknn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Exact fair selection from a candidate pool: pick exactly k candidates whose
// per-(attribute, value) counts equal the required counts, minimizing the
// total distance to the query.
//
//   select_1attr   one constrained attribute: per-value top lists
//   select_2attr   two attributes: min-cost flow on the value bipartite graph
//   select_3plus   any number of attributes: branch and bound on the 0/1
//                  selection variables
//   oracle_enumerate  exhaustive search, the ground truth for tests

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "fairknn/core.hpp"
#include "fairknn/min_cost_flow.hpp"
#include "fairknn/retrieval.hpp"

namespace fairknn {

struct SelectionProblem {
  std::vector<Candidate> candidates;
  FairnessSpec spec;
};

enum class SelectionStatus { Feasible, Infeasible, ResourceExhausted };
enum class Solver { Sort, Flow, Ilp, Oracle };

inline const char* to_string(SelectionStatus s) {
  switch (s) {
    case SelectionStatus::Feasible: return "feasible";
    case SelectionStatus::Infeasible: return "infeasible";
    case SelectionStatus::ResourceExhausted: return "resource_exhausted";
  }
  return "?";
}

inline const char* to_string(Solver s) {
  switch (s) {
    case Solver::Sort: return "sort";
    case Solver::Flow: return "flow";
    case Solver::Ilp: return "ilp";
    case Solver::Oracle: return "oracle";
  }
  return "?";
}

struct SelectionResult {
  SelectionStatus status = SelectionStatus::Infeasible;
  Solver solver = Solver::Sort;
  std::vector<RecordId> selected;  // ascending by (distance, id)
  double total_cost = 0.0;
  std::size_t nodes = 0;           // branch-and-bound nodes, ILP only

  [[nodiscard]] bool feasible() const { return status == SelectionStatus::Feasible; }
};

namespace detail {

inline bool eligible(const Candidate& c, const FairnessSpec& spec) {
  for (const auto& [j, counts] : spec.constraints()) {
    if (j >= c.attrs.size() || spec.required(j, c.attrs[j]) == 0) return false;
  }
  return true;
}

/// Orders the chosen candidates and sums their distances in that order, so
/// every solver reports the same cost for the same set.
inline SelectionResult make_feasible(std::vector<const Candidate*> chosen, Solver solver) {
  std::sort(chosen.begin(), chosen.end(), [](const Candidate* a, const Candidate* b) { return closer(*a, *b); });
  SelectionResult r;
  r.status = SelectionStatus::Feasible;
  r.solver = solver;
  for (const Candidate* c : chosen) {
    r.selected.push_back(c->id);
    r.total_cost += c->dist;
  }
  return r;
}

inline SelectionResult make_status(SelectionStatus status, Solver solver) {
  SelectionResult r;
  r.status = status;
  r.solver = solver;
  return r;
}

}  // namespace detail

/// Sum of distances of the given candidates in (distance, id) order.
inline double selection_cost(std::vector<const Candidate*> chosen) {
  std::sort(chosen.begin(), chosen.end(), [](const Candidate* a, const Candidate* b) { return closer(*a, *b); });
  double s = 0.0;
  for (const Candidate* c : chosen) s += c->dist;
  return s;
}

inline SelectionResult select_1attr(const SelectionProblem& p) {
  require(p.spec.num_constrained() == 1, "select_1attr: spec must constrain exactly one attribute");
  const auto& [attr, counts] = *p.spec.constraints().begin();
  std::map<ValueIndex, std::vector<const Candidate*>> groups;
  for (const auto& c : p.candidates)
    if (detail::eligible(c, p.spec)) groups[c.attrs[attr]].push_back(&c);
  std::vector<const Candidate*> chosen;
  for (const auto& [v, need] : counts) {
    if (need == 0) continue;
    auto& g = groups[v];
    if (g.size() < need) return detail::make_status(SelectionStatus::Infeasible, Solver::Sort);
    std::partial_sort(g.begin(), g.begin() + static_cast<std::ptrdiff_t>(need), g.end(),
                      [](const Candidate* a, const Candidate* b) { return closer(*a, *b); });
    chosen.insert(chosen.end(), g.begin(), g.begin() + static_cast<std::ptrdiff_t>(need));
  }
  return detail::make_feasible(std::move(chosen), Solver::Sort);
}

/// Source -> value nodes of the first attribute (capacity = required count),
/// one convex edge per value pair (a, b) to the value node of the second
/// attribute whose unit costs are the sorted candidate distances, value nodes
/// -> sink (capacity = required count). A pair carries at most
/// min(need_a, need_b) units, so only that many candidates are kept.
inline SelectionResult select_2attr(const SelectionProblem& p) {
  require(p.spec.num_constrained() == 2, "select_2attr: spec must constrain exactly two attributes");
  auto it = p.spec.constraints().begin();
  const auto& [attr_a, counts_a] = *it++;
  const auto& [attr_b, counts_b] = *it;
  const std::size_t k = p.spec.k();
  if (k == 0) return detail::make_feasible({}, Solver::Flow);

  // Dense per-value tables; node 0 is the source, 1 the sink.
  constexpr int kSource = 0, kSink = 1;
  auto dense = [](const FairnessSpec::ValueCounts& counts) {
    std::size_t size = 0;
    for (const auto& [v, need] : counts) size = std::max<std::size_t>(size, v + 1);
    std::vector<std::size_t> need(size, 0);
    for (const auto& [v, n] : counts) need[v] = n;
    return need;
  };
  const auto need_a = dense(counts_a), need_b = dense(counts_b);
  std::vector<int> node_a(need_a.size(), -1), node_b(need_b.size(), -1);
  int next = 2;
  for (std::size_t v = 0; v < need_a.size(); ++v)
    if (need_a[v] > 0) node_a[v] = next++;
  for (std::size_t v = 0; v < need_b.size(); ++v)
    if (need_b[v] > 0) node_b[v] = next++;

  std::vector<std::vector<const Candidate*>> cells(need_a.size() * need_b.size());
  for (const auto& c : p.candidates) {
    if (!detail::eligible(c, p.spec)) continue;
    cells[c.attrs[attr_a] * need_b.size() + c.attrs[attr_b]].push_back(&c);
  }
  auto by_distance = [](const Candidate* a, const Candidate* b) { return closer(*a, *b); };
  MinCostFlow<double> graph(next);
  for (std::size_t v = 0; v < need_a.size(); ++v)
    if (node_a[v] >= 0) graph.add_edge(kSource, node_a[v], static_cast<std::int64_t>(need_a[v]), 0.0);
  for (std::size_t v = 0; v < need_b.size(); ++v)
    if (node_b[v] >= 0) graph.add_edge(node_b[v], kSink, static_cast<std::int64_t>(need_b[v]), 0.0);
  std::vector<std::pair<std::size_t, int>> cell_edges;
  for (std::size_t cell = 0; cell < cells.size(); ++cell) {
    auto& members = cells[cell];
    if (members.empty()) continue;
    const std::size_t va = cell / need_b.size(), vb = cell % need_b.size();
    const std::size_t cap = std::min(need_a[va], need_b[vb]);
    if (members.size() > cap) {
      std::nth_element(members.begin(), members.begin() + static_cast<std::ptrdiff_t>(cap), members.end(),
                       by_distance);
      members.resize(cap);
    }
    std::sort(members.begin(), members.end(), by_distance);
    std::vector<double> units;
    for (const Candidate* c : members) units.push_back(c->dist);
    cell_edges.emplace_back(cell, graph.add_convex_edge(node_a[va], node_b[vb], std::move(units)));
  }

  const auto res = graph.solve(kSource, kSink, static_cast<std::int64_t>(k));
  if (res.flow < static_cast<std::int64_t>(k)) return detail::make_status(SelectionStatus::Infeasible, Solver::Flow);
  std::vector<const Candidate*> chosen;
  for (const auto& [cell, edge] : cell_edges) {
    const auto f = static_cast<std::size_t>(graph.edge(edge).flow);
    chosen.insert(chosen.end(), cells[cell].begin(), cells[cell].begin() + static_cast<std::ptrdiff_t>(f));
  }
  return detail::make_feasible(std::move(chosen), Solver::Flow);
}

struct IlpOptions {
  std::size_t node_budget = 5'000'000;
};

namespace detail {

// Branch and bound over the 0/1 selection variables.
//
// Candidates sharing the same values on every constrained attribute form a
// cell. They are interchangeable for the constraints, so some optimal
// solution selects a cheapest-first prefix of each cell; branching therefore
// fixes, per cell, how many of its cheapest variables are 1 (the rest 0).
//
// Lower bound: for each constrained attribute alone, the cheapest way to meet
// its residual counts from undecided cells; the bound is the maximum over
// attributes. Propagation forces counts when residual demand equals what the
// undecided cells can still supply, and detects dead ends.
class CellBranchAndBound {
 public:
  CellBranchAndBound(const SelectionProblem& p, const IlpOptions& opts) : opts_(opts) {
    attrs_ = p.spec.constrained_attributes();
    std::map<std::vector<ValueIndex>, std::size_t> cell_of;
    std::map<std::pair<std::size_t, ValueIndex>, std::size_t> group_of;
    for (std::size_t a = 0; a < attrs_.size(); ++a)
      for (const auto& [v, need] : p.spec.constraints().at(attrs_[a]))
        if (need > 0) {
          group_of[{a, v}] = demand_.size();
          demand_.push_back(static_cast<int>(need));
          group_attr_.push_back(a);
        }
    for (const auto& c : p.candidates) {
      if (!eligible(c, p.spec)) continue;
      std::vector<ValueIndex> key;
      for (std::size_t j : attrs_) key.push_back(c.attrs[j]);
      auto [it, inserted] = cell_of.try_emplace(key, cells_.size());
      if (inserted) {
        Cell cell;
        for (std::size_t a = 0; a < attrs_.size(); ++a) cell.groups.push_back(group_of.at({a, key[a]}));
        cells_.push_back(std::move(cell));
      }
      cells_[it->second].members.push_back(&c);
    }
    group_cells_.resize(demand_.size());
    group_items_.resize(demand_.size());
    for (std::size_t ci = 0; ci < cells_.size(); ++ci) {
      auto& cell = cells_[ci];
      std::sort(cell.members.begin(), cell.members.end(),
                [](const Candidate* a, const Candidate* b) { return closer(*a, *b); });
      cell.prefix.assign(cell.members.size() + 1, 0.0);
      for (std::size_t i = 0; i < cell.members.size(); ++i) cell.prefix[i + 1] = cell.prefix[i] + cell.members[i]->dist;
      for (std::size_t g : cell.groups) {
        group_cells_[g].push_back(ci);
        for (std::size_t i = 0; i < cell.members.size(); ++i) group_items_[g].push_back({cell.members[i]->dist, ci});
      }
    }
    for (auto& items : group_items_) std::sort(items.begin(), items.end());
  }

  SelectionResult run(std::size_t k) {
    if (k == 0) return make_feasible({}, Solver::Ilp);
    State root;
    root.count.assign(cells_.size(), -1);
    root.residual = demand_;
    root.avail.assign(demand_.size(), 0);
    for (std::size_t g = 0; g < demand_.size(); ++g)
      for (std::size_t ci : group_cells_[g]) root.avail[g] += static_cast<int>(cells_[ci].members.size());
    if (propagate(root)) dfs(root);
    SelectionResult r;
    if (exhausted_) {
      r = make_status(SelectionStatus::ResourceExhausted, Solver::Ilp);
    } else if (!best_counts_) {
      r = make_status(SelectionStatus::Infeasible, Solver::Ilp);
    } else {
      std::vector<const Candidate*> chosen;
      for (std::size_t ci = 0; ci < cells_.size(); ++ci)
        for (int i = 0; i < (*best_counts_)[ci]; ++i) chosen.push_back(cells_[ci].members[i]);
      r = make_feasible(std::move(chosen), Solver::Ilp);
    }
    r.nodes = nodes_;
    return r;
  }

 private:
  struct Cell {
    std::vector<const Candidate*> members;
    std::vector<double> prefix;
    std::vector<std::size_t> groups;  // one per constrained attribute
  };

  struct State {
    std::vector<int> count;     // -1 undecided
    std::vector<int> residual;  // per group
    std::vector<int> avail;     // per group, members in undecided cells
    double cost = 0.0;
  };

  void fix(State& s, std::size_t ci, int n) const {
    s.count[ci] = n;
    s.cost += cells_[ci].prefix[n];
    const int size = static_cast<int>(cells_[ci].members.size());
    for (std::size_t g : cells_[ci].groups) {
      s.residual[g] -= n;
      s.avail[g] -= size;
    }
  }

  std::pair<int, int> range(const State& s, std::size_t ci) const {
    const int size = static_cast<int>(cells_[ci].members.size());
    int lo = 0, hi = size;
    for (std::size_t g : cells_[ci].groups) {
      hi = std::min(hi, s.residual[g]);
      lo = std::max(lo, s.residual[g] - (s.avail[g] - size));
    }
    return {lo, hi};
  }

  /// Fixes forced cells until nothing changes. False on a dead end.
  bool propagate(State& s) const {
    bool changed = true;
    while (changed) {
      changed = false;
      for (std::size_t g = 0; g < demand_.size(); ++g)
        if (s.residual[g] < 0 || s.residual[g] > s.avail[g]) return false;
      for (std::size_t ci = 0; ci < cells_.size(); ++ci) {
        if (s.count[ci] >= 0) continue;
        const auto [lo, hi] = range(s, ci);
        if (lo > hi) return false;
        if (lo == hi) {
          fix(s, ci, lo);
          changed = true;
        }
      }
    }
    return true;
  }

  double lower_bound(const State& s) const {
    double best = 0.0;
    std::vector<double> per_attr(attrs_.size(), 0.0);
    for (std::size_t g = 0; g < demand_.size(); ++g) {
      int need = s.residual[g];
      double sum = 0.0;
      for (const auto& [d, ci] : group_items_[g]) {
        if (need == 0) break;
        if (s.count[ci] >= 0) continue;
        sum += d;
        --need;
      }
      per_attr[group_attr_[g]] += sum;
    }
    for (double v : per_attr) best = std::max(best, v);
    return s.cost + best;
  }

  bool prunable(double bound) const {
    return best_cost_ < std::numeric_limits<double>::infinity() &&
           bound >= best_cost_ - 1e-12 * std::max(1.0, std::abs(best_cost_));
  }

  void dfs(const State& s) {
    if (exhausted_) return;
    if (++nodes_ > opts_.node_budget) {
      exhausted_ = true;
      return;
    }
    // Most constrained open group: fewest undecided cells.
    std::size_t pick = demand_.size();
    std::size_t fewest = std::numeric_limits<std::size_t>::max();
    for (std::size_t g = 0; g < demand_.size(); ++g) {
      if (s.residual[g] == 0) continue;
      std::size_t open = 0;
      for (std::size_t ci : group_cells_[g]) open += s.count[ci] < 0;
      if (open < fewest) {
        fewest = open;
        pick = g;
      }
    }
    if (pick == demand_.size()) {
      if (s.cost < best_cost_) {
        best_cost_ = s.cost;
        best_counts_ = s.count;
        for (auto& c : *best_counts_) c = std::max(c, 0);
      }
      return;
    }
    std::size_t cell = cells_.size();
    for (std::size_t ci : group_cells_[pick]) {
      if (s.count[ci] >= 0) continue;
      if (cell == cells_.size() || closer(*cells_[ci].members[0], *cells_[cell].members[0])) cell = ci;
    }
    const auto [lo, hi] = range(s, cell);
    std::vector<std::pair<double, State>> children;
    for (int n = hi; n >= lo; --n) {
      State child = s;
      fix(child, cell, n);
      if (!propagate(child)) continue;
      const double bound = lower_bound(child);
      if (prunable(bound)) continue;
      children.emplace_back(bound, std::move(child));
    }
    std::stable_sort(children.begin(), children.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [bound, child] : children) {
      if (prunable(bound)) continue;
      dfs(child);
    }
  }

  IlpOptions opts_;
  std::vector<std::size_t> attrs_;
  std::vector<Cell> cells_;
  std::vector<int> demand_;
  std::vector<std::size_t> group_attr_;
  std::vector<std::vector<std::size_t>> group_cells_;
  std::vector<std::vector<std::pair<double, std::size_t>>> group_items_;
  double best_cost_ = std::numeric_limits<double>::infinity();
  std::optional<std::vector<int>> best_counts_;
  std::size_t nodes_ = 0;
  bool exhausted_ = false;
};

}  // namespace detail

/// Proven-optimal selection for any number of constrained attributes. Returns
/// ResourceExhausted rather than an unproven answer when the node budget runs
/// out.
inline SelectionResult select_3plus(const SelectionProblem& p, const IlpOptions& opts = {}) {
  detail::CellBranchAndBound bnb(p, opts);
  return bnb.run(p.spec.k());
}

inline constexpr std::size_t kOracleMaxCandidates = 24;

/// Exhaustive search over all k-subsets (with count-overflow pruning only).
inline SelectionResult oracle_enumerate(const SelectionProblem& p) {
  require(p.candidates.size() <= kOracleMaxCandidates, "oracle_enumerate: at most 24 candidates");
  const std::size_t n = p.candidates.size();
  const std::size_t k = p.spec.k();
  const auto attrs = p.spec.constrained_attributes();
  std::vector<std::map<ValueIndex, std::size_t>> used(attrs.size());
  std::vector<std::size_t> current, best;
  double best_cost = std::numeric_limits<double>::infinity();
  bool found = false;

  auto fits = [&](const Candidate& c) {
    for (std::size_t a = 0; a < attrs.size(); ++a) {
      const std::size_t j = attrs[a];
      if (j >= c.attrs.size()) return false;
      if (used[a][c.attrs[j]] + 1 > p.spec.required(j, c.attrs[j])) return false;
    }
    return true;
  };
  auto recurse = [&](auto&& self, std::size_t i, double cost) -> void {
    if (current.size() == k) {
      // Count overflow pruning plus |S| = k and per-attribute sums of k
      // already force every count to equal its requirement.
      if (!found || cost < best_cost) {
        best_cost = cost;
        best = current;
        found = true;
      }
      return;
    }
    if (n - i < k - current.size()) return;
    const Candidate& c = p.candidates[i];
    if (fits(c)) {
      for (std::size_t a = 0; a < attrs.size(); ++a) ++used[a][c.attrs[attrs[a]]];
      current.push_back(i);
      self(self, i + 1, cost + c.dist);
      current.pop_back();
      for (std::size_t a = 0; a < attrs.size(); ++a) --used[a][c.attrs[attrs[a]]];
    }
    self(self, i + 1, cost);
  };
  recurse(recurse, 0, 0.0);
  if (!found) return detail::make_status(SelectionStatus::Infeasible, Solver::Oracle);
  std::vector<const Candidate*> chosen;
  for (std::size_t i : best) chosen.push_back(&p.candidates[i]);
  return detail::make_feasible(std::move(chosen), Solver::Oracle);
}

enum class SolverChoice { Auto, Sort, Flow, Ilp, Oracle };

/// Dispatch by constrained-attribute count: 1 -> sort, 2 -> flow, 3+ -> ILP.
inline SelectionResult select(const SelectionProblem& p, SolverChoice choice = SolverChoice::Auto,
                              const IlpOptions& ilp = {}) {
  if (choice == SolverChoice::Auto) {
    const std::size_t m = p.spec.num_constrained();
    choice = m == 1 ? SolverChoice::Sort : m == 2 ? SolverChoice::Flow : SolverChoice::Ilp;
  }
  switch (choice) {
    case SolverChoice::Sort: return select_1attr(p);
    case SolverChoice::Flow: return select_2attr(p);
    case SolverChoice::Oracle: return oracle_enumerate(p);
    default: return select_3plus(p, ilp);
  }
}

struct Violation {
  enum class Kind { WrongSize, CountMismatch, UnknownId, DuplicateId, CostMismatch };
  Kind kind = Kind::CountMismatch;
  std::size_t attribute = 0;
  ValueIndex value = 0;
  double expected = 0;
  double got = 0;
  RecordId id = 0;
};

struct VerifyReport {
  bool ok = true;
  std::vector<Violation> violations;
};

/// Recounts every constrained (attribute, value) over the selection and
/// recomputes its cost. Infeasible and exhausted results verify vacuously.
inline VerifyReport verify(const SelectionResult& result, const SelectionProblem& p) {
  VerifyReport rep;
  if (!result.feasible()) return rep;
  auto add = [&](Violation v) {
    rep.ok = false;
    rep.violations.push_back(v);
  };
  std::unordered_map<RecordId, const Candidate*> by_id;
  for (const auto& c : p.candidates) by_id.emplace(c.id, &c);
  std::unordered_set<RecordId> seen;
  std::vector<const Candidate*> chosen;
  for (RecordId id : result.selected) {
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      add({Violation::Kind::UnknownId, 0, 0, 0, 0, id});
      continue;
    }
    if (!seen.insert(id).second) {
      add({Violation::Kind::DuplicateId, 0, 0, 0, 0, id});
      continue;
    }
    chosen.push_back(it->second);
  }
  if (result.selected.size() != p.spec.k())
    add({Violation::Kind::WrongSize, 0, 0, static_cast<double>(p.spec.k()), static_cast<double>(result.selected.size())});
  for (const auto& [j, counts] : p.spec.constraints()) {
    std::map<ValueIndex, std::size_t> got;
    for (const Candidate* c : chosen) ++got[c->attrs.at(j)];
    std::set<ValueIndex> values;
    for (const auto& [v, n] : counts) values.insert(v);
    for (const auto& [v, n] : got) values.insert(v);
    for (ValueIndex v : values) {
      const std::size_t want = p.spec.required(j, v);
      const std::size_t have = got.contains(v) ? got[v] : 0;
      if (want != have)
        add({Violation::Kind::CountMismatch, j, v, static_cast<double>(want), static_cast<double>(have)});
    }
  }
  const double cost = selection_cost(chosen);
  if (std::abs(cost - result.total_cost) > 1e-9 * std::max(1.0, std::abs(cost)))
    add({Violation::Kind::CostMismatch, 0, 0, cost, result.total_cost});
  return rep;
}

inline std::string describe(const Violation& v, const AttributeSchema* schema = nullptr) {
  auto num = [](double x) { return detail::format_double(x); };
  switch (v.kind) {
    case Violation::Kind::WrongSize: return "selection size: expected " + num(v.expected) + ", got " + num(v.got);
    case Violation::Kind::UnknownId: return "record " + std::to_string(v.id) + " is not a candidate";
    case Violation::Kind::DuplicateId: return "record " + std::to_string(v.id) + " selected twice";
    case Violation::Kind::CostMismatch: return "total cost: recomputed " + num(v.expected) + ", reported " + num(v.got);
    case Violation::Kind::CountMismatch: {
      std::string attr = std::to_string(v.attribute), value = std::to_string(v.value);
      if (schema && v.attribute < schema->size()) {
        attr = (*schema)[v.attribute].name;
        if (v.value < schema->domain_size(v.attribute)) value = (*schema)[v.attribute].domain[v.value];
      }
      return "(" + attr + ", " + value + "): expected " + num(v.expected) + ", got " + num(v.got);
    }
  }
  return "?";
}

}  // namespace fairknn
