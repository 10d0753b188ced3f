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
#include <cmath>
#include <map>
#include <unordered_set>
#include <vector>

#include "fairknn/core.hpp"
#include "fairknn/dataset.hpp"
#include "fairknn/lsh.hpp"
#include "fairknn/partition_index.hpp"

namespace fairknn {

struct Candidate {
  RecordId id = 0;
  std::uint32_t row = 0;
  PartitionBitmap partition;
  double dist = 0.0;
  std::vector<ValueIndex> attrs;
};

/// Ascending distance, ties by record id.
inline bool closer(const Candidate& a, const Candidate& b) {
  return a.dist < b.dist || (a.dist == b.dist && a.id < b.id);
}

struct PartitionIndex {
  HashFamily family;
  LshTables tables;
  std::size_t k_star_surplus = 0;
  bool ell_clamped = false;
};

/// Bitmap registry plus one LSH index per stored partition.
struct FairIndex {
  AttributeSchema schema;
  BitLayout layout;
  PartitionRegistry registry;
  LshParams params;
  HashFamilyKind family_kind = HashFamilyKind::PStableL2;
  DistanceKind kind = DistanceKind::euclidean();
  std::map<PartitionBitmap, PartitionIndex> partitions;

  [[nodiscard]] std::size_t clamped_partitions() const {
    std::size_t n = 0;
    for (const auto& [b, p] : partitions) n += p.ell_clamped;
    return n;
  }
};

inline HashFamilyKind family_for(const DistanceKind& kind) {
  switch (kind.metric) {
    case DistanceMetric::Euclidean: return HashFamilyKind::PStableL2;
    case DistanceMetric::CosineBased: return HashFamilyKind::AngularSign;
    default: throw InputError("LSH indexes support euclidean and cosine distance only, not " + to_string(kind));
  }
}

inline std::uint64_t partition_seed(std::uint64_t seed, PartitionBitmap b) {
  return splitmix64(seed ^ splitmix64(b.bits + 0x5851f42d4c957f2dULL));
}

/// Table layout for one partition: explicit mu/ell from params, or derived
/// from the partition size when zero.
inline DerivedParams partition_params(std::size_t n_pi, HashFamilyKind kind, const LshParams& params) {
  DerivedParams d;
  if (params.mu == 0 || params.ell == 0) {
    const auto [p1, p2] = base_collision_probabilities(kind, params);
    d = derive_params(n_pi, p1, p2, params.K, params.delta, params.ell_max);
    if (kind == HashFamilyKind::AngularSign) d.mu = std::min<std::size_t>(d.mu, 63);
  }
  if (params.mu != 0) d.mu = params.mu;
  if (params.ell != 0) {
    d.ell = params.ell;
    d.clamped = false;
  }
  d.k_star_surplus = candidate_surplus(d.ell, params.delta);
  return d;
}

inline FairIndex build_fair_index(const Dataset& ds, const LshParams& params) {
  params.validate();
  FairIndex index;
  index.schema = ds.schema;
  index.layout = BitLayout(ds.schema);
  index.registry = build_registry(ds.records, index.layout);
  index.params = params;
  index.kind = ds.kind;
  index.family_kind = family_for(ds.kind);
  auto embedding_of = [&](std::uint32_t row) { return ds.embedding(row); };
  for (PartitionBitmap b : index.registry.partitions()) {
    const auto& members = index.registry.members(b);
    const DerivedParams d = partition_params(members.size(), index.family_kind, params);
    PartitionIndex p;
    p.family = make_hash_family(index.family_kind, ds.dim, d.mu, d.ell, params.w, partition_seed(params.seed, b));
    p.tables = build_partition_index(members, embedding_of, p.family);
    p.k_star_surplus = d.k_star_surplus;
    p.ell_clamped = d.clamped;
    index.partitions.emplace(b, std::move(p));
  }
  return index;
}

/// min over constrained attributes of the required count of the partition's
/// value, scaled by `boost` and rounded up.
inline std::size_t quota(PartitionBitmap pi, const FairnessSpec& spec, const BitLayout& layout, double boost = 1.0) {
  const auto decoded = decode_partition(pi, layout);
  std::size_t k_pi = spec.k();
  for (const auto& [j, counts] : spec.constraints()) {
    require(j < decoded.size() && decoded[j].has_value(), "quota: partition lacks a constrained attribute value");
    const std::size_t need = spec.required(j, *decoded[j]);
    require(need > 0, "quota: partition is not relevant to the spec");
    k_pi = std::min(k_pi, need);
  }
  if (boost != 1.0) k_pi = static_cast<std::size_t>(std::ceil(static_cast<double>(k_pi) * boost));
  return k_pi;
}

struct NearPiResult {
  std::vector<Candidate> candidates;
  std::size_t collisions = 0;
  std::size_t scanned = 0;
};

/// Probes every table, keeps at most k_star rows, ranks them by exact distance
/// and returns the first k_pi. Short results are legal.
inline NearPiResult near_pi(std::span<const double> q, PartitionBitmap pi, const PartitionIndex& index,
                            std::size_t k_pi, std::size_t k_star, const Dataset& ds) {
  NearPiResult out;
  const ProbeResult hits = probe(q, index.tables, index.family, k_star);
  out.collisions = hits.collisions;
  out.scanned = hits.rows.size();
  std::vector<std::pair<double, std::uint32_t>> scored;
  scored.reserve(hits.rows.size());
  for (std::uint32_t row : hits.rows) scored.emplace_back(distance(ds.records[row].embedding, q, ds.kind), row);
  const std::size_t keep = std::min(k_pi, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(),
                    [&](const auto& x, const auto& y) {
                      return x.first < y.first || (x.first == y.first && ds.records[x.second].id < ds.records[y.second].id);
                    });
  out.candidates.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) {
    const auto& rec = ds.records[scored[i].second];
    out.candidates.push_back({rec.id, scored[i].second, pi, scored[i].first, rec.attrs});
  }
  return out;
}

struct PartitionOutcome {
  PartitionBitmap partition;
  std::size_t size = 0;
  std::size_t quota = 0;
  std::size_t k_star = 0;
  std::size_t collisions = 0;
  std::size_t achieved = 0;
};

struct RetrievalReport {
  std::vector<Candidate> candidates;
  std::vector<PartitionOutcome> partitions;
  std::size_t scanned = 0;         // distance evaluations
  std::size_t relevant_size = 0;   // points held by the relevant partitions
  std::size_t comparisons = 0;     // bitmap comparisons while finding relevant partitions

  [[nodiscard]] double scanned_fraction() const {
    return relevant_size == 0 ? 0.0 : static_cast<double>(scanned) / static_cast<double>(relevant_size);
  }
};

struct RetrievalOptions {
  double quota_boost = 1.0;
};

namespace detail {

inline void assert_disjoint(const std::vector<Candidate>& cands) {
  std::unordered_set<RecordId> ids;
  for (const auto& c : cands) require(ids.insert(c.id).second, "retrieval produced a duplicate record id");
}

}  // namespace detail

/// near_neighbor with a caller-supplied quota rule `quota_of(partition)`.
template <typename QuotaFn>
RetrievalReport near_neighbor_with(const Query& query, const FairIndex& index, const Dataset& ds, QuotaFn&& quota_of) {
  require(query.vector.size() == ds.dim, "near_neighbor: query dimension mismatch");
  RetrievalReport report;
  const QueryMask qm = query_mask(query.spec, index.layout);
  for (PartitionBitmap b : relevant_partitions(index.registry, qm, &report.comparisons)) {
    auto it = index.partitions.find(b);
    if (it == index.partitions.end()) continue;
    const std::size_t n_pi = index.registry.members(b).size();
    PartitionOutcome po;
    po.partition = b;
    po.size = n_pi;
    po.quota = quota_of(b);
    po.k_star = po.quota + it->second.k_star_surplus;
    NearPiResult r = near_pi(query.vector, b, it->second, po.quota, po.k_star, ds);
    po.collisions = r.collisions;
    po.achieved = r.candidates.size();
    report.scanned += r.scanned;
    report.relevant_size += n_pi;
    report.partitions.push_back(po);
    for (auto& c : r.candidates) report.candidates.push_back(std::move(c));
  }
  detail::assert_disjoint(report.candidates);
  return report;
}

/// Candidate pool for a query: relevant partitions via the bitmap test, then
/// near_pi on each in ascending bitmap order.
inline RetrievalReport near_neighbor(const Query& query, const FairIndex& index, const Dataset& ds,
                                     const RetrievalOptions& opts = {}) {
  return near_neighbor_with(query, index, ds, [&](PartitionBitmap b) {
    return quota(b, query.spec, index.layout, opts.quota_boost);
  });
}

/// Exact counterpart of near_neighbor: computes the distance to every point of
/// every relevant partition and keeps each partition's quota of nearest
/// points. Any optimal fair selection takes at most quota points from a
/// partition, and they are its nearest, so the pool contains an optimum.
inline RetrievalReport exhaustive_retrieval(const Query& query, const PartitionRegistry& registry,
                                            const Dataset& ds) {
  require(query.vector.size() == ds.dim, "exhaustive_retrieval: query dimension mismatch");
  RetrievalReport report;
  const QueryMask qm = query_mask(query.spec, registry.layout());
  for (PartitionBitmap b : relevant_partitions(registry, qm, &report.comparisons)) {
    const auto& members = registry.members(b);
    PartitionOutcome po;
    po.partition = b;
    po.size = members.size();
    po.quota = quota(b, query.spec, registry.layout());
    po.k_star = members.size();
    std::vector<std::pair<double, std::uint32_t>> all;
    all.reserve(members.size());
    for (std::uint32_t row : members) all.emplace_back(distance(ds.records[row].embedding, query.vector, ds.kind), row);
    const std::size_t keep = std::min(po.quota, all.size());
    auto by_dist_id = [&](const auto& x, const auto& y) {
      return x.first < y.first || (x.first == y.first && ds.records[x.second].id < ds.records[y.second].id);
    };
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(), by_dist_id);
    for (std::size_t i = 0; i < keep; ++i) {
      const auto& rec = ds.records[all[i].second];
      report.candidates.push_back({rec.id, all[i].second, b, all[i].first, rec.attrs});
    }
    po.collisions = members.size();
    po.achieved = keep;
    report.scanned += members.size();
    report.relevant_size += members.size();
    report.partitions.push_back(po);
  }
  return report;
}

}  // namespace fairknn
