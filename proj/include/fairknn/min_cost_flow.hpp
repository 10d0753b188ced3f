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

#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "fairknn/core.hpp"

namespace fairknn {

// Successive shortest paths with Johnson potentials: one Bellman-Ford pass
// seeds the potentials (negative edge costs allowed, negative cycles not),
// then every augmentation runs Dijkstra on reduced costs. Integral
// capacities give an integral optimal flow.
//
// A convex edge carries an ascending list of per-unit costs and behaves like
// that many parallel unit edges: the residual forward cost is the next unused
// unit, the residual backward cost undoes the last used one.
template <typename Cost = double>
class MinCostFlow {
 public:
  struct Edge {
    int from;
    int to;
    std::int64_t cap;
    std::int64_t flow;
    Cost cost;
    int convex = -1;  // index into unit_costs_, forward edges only
  };

  struct Result {
    std::int64_t flow = 0;
    Cost cost = 0;
    std::size_t augmentations = 0;
  };

  explicit MinCostFlow(int num_nodes) : adj_(num_nodes) {}

  int add_edge(int from, int to, std::int64_t cap, Cost cost) {
    require(from >= 0 && from < num_nodes() && to >= 0 && to < num_nodes(), "min-cost flow: bad node index");
    require(cap >= 0, "min-cost flow: negative capacity");
    const int id = static_cast<int>(edges_.size());
    edges_.push_back({from, to, cap, 0, cost});
    edges_.push_back({to, from, 0, 0, -cost});
    adj_[from].push_back(id);
    adj_[to].push_back(id + 1);
    return id;
  }

  /// Capacity = unit_costs.size(); unit_costs must be ascending.
  int add_convex_edge(int from, int to, std::vector<Cost> unit_costs) {
    require(std::is_sorted(unit_costs.begin(), unit_costs.end()), "min-cost flow: convex unit costs must ascend");
    const int id = add_edge(from, to, static_cast<std::int64_t>(unit_costs.size()), Cost{0});
    edges_[id].convex = static_cast<int>(unit_costs_.size());
    unit_costs_.push_back(std::move(unit_costs));
    return id;
  }

  [[nodiscard]] int num_nodes() const { return static_cast<int>(adj_.size()); }
  [[nodiscard]] const Edge& edge(int id) const { return edges_.at(id); }

  /// Sends up to `limit` units from source to sink at minimum cost.
  Result solve(int source, int sink, std::int64_t limit = std::numeric_limits<std::int64_t>::max()) {
    Result res;
    std::vector<Cost> potential = bellman_ford(source);
    const int n = num_nodes();
    std::vector<Cost> dist(n);
    std::vector<int> via(n);
    std::vector<char> done(n);
    using Item = std::pair<Cost, int>;
    std::vector<Item> heap;  // min-heap, storage reused across augmentations
    while (res.flow < limit) {
      std::fill(dist.begin(), dist.end(), kInf);
      std::fill(via.begin(), via.end(), -1);
      std::fill(done.begin(), done.end(), 0);
      heap.clear();
      dist[source] = 0;
      heap.push_back({Cost{0}, source});
      while (!heap.empty()) {
        std::pop_heap(heap.begin(), heap.end(), std::greater<>{});
        const auto [d, u] = heap.back();
        heap.pop_back();
        if (done[u]) continue;
        done[u] = 1;
        for (int id : adj_[u]) {
          const Edge& e = edges_[id];
          if (e.cap - e.flow <= 0 || potential[e.to] == kInf) continue;
          // Rounding can leave reduced costs a hair below zero.
          const Cost reduced = std::max(Cost{0}, residual_cost(id) + potential[u] - potential[e.to]);
          if (d + reduced < dist[e.to]) {
            dist[e.to] = d + reduced;
            via[e.to] = id;
            heap.push_back({dist[e.to], e.to});
            std::push_heap(heap.begin(), heap.end(), std::greater<>{});
          }
        }
      }
      if (dist[sink] == kInf) break;
      for (int v = 0; v < n; ++v)
        if (dist[v] != kInf && potential[v] != kInf) potential[v] += dist[v];
      std::int64_t push = limit - res.flow;
      for (int v = sink; v != source; v = edges_[via[v]].from) {
        push = std::min(push, edges_[via[v]].cap - edges_[via[v]].flow);
        if (edges_[via[v] & ~1].convex >= 0) push = std::min<std::int64_t>(push, 1);
      }
      for (int v = sink; v != source; v = edges_[via[v]].from) {
        res.cost += push * residual_cost(via[v]);
        edges_[via[v]].flow += push;
        edges_[via[v] ^ 1].flow -= push;
      }
      res.flow += push;
      ++res.augmentations;
    }
    return res;
  }

 private:
  static constexpr Cost kInf = std::numeric_limits<Cost>::has_infinity ? std::numeric_limits<Cost>::infinity()
                                                                       : std::numeric_limits<Cost>::max();

  [[nodiscard]] Cost residual_cost(int id) const {
    const Edge& fwd = edges_[id & ~1];
    if (fwd.convex < 0) return edges_[id].cost;
    const auto& units = unit_costs_[fwd.convex];
    return (id & 1) == 0 ? units[fwd.flow] : -units[fwd.flow - 1];
  }

  std::vector<Cost> bellman_ford(int source) const {
    const int n = num_nodes();
    std::vector<Cost> pot(n, kInf);
    pot[source] = 0;
    for (int iter = 0; iter < n; ++iter) {
      bool changed = false;
      for (std::size_t id = 0; id < edges_.size(); ++id) {
        const Edge& e = edges_[id];
        if (e.cap - e.flow <= 0 || pot[e.from] == kInf) continue;
        const Cost c = residual_cost(static_cast<int>(id));
        if (pot[e.from] + c < pot[e.to]) {
          pot[e.to] = pot[e.from] + c;
          changed = true;
        }
      }
      if (!changed) return pot;
    }
    throw ContractViolation("min-cost flow: negative cycle in residual graph");
  }

  std::vector<std::vector<int>> adj_;
  std::vector<Edge> edges_;
  std::vector<std::vector<Cost>> unit_costs_;
};

}  // namespace fairknn
