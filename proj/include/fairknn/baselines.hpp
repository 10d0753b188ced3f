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

// Comparison retrieval strategies: one index per single attribute value
// (SAIR) and product-of-marginals partition quotas (JIR).

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>
#include <vector>

#include "fairknn/retrieval.hpp"

namespace fairknn {

/// One LSH index per (attribute, value) over the records holding that value.
/// Every record is indexed once per attribute.
struct SairIndex {
  using Key = std::pair<std::size_t, ValueIndex>;
  std::map<Key, std::vector<std::uint32_t>> members;
  std::map<Key, PartitionIndex> groups;
};

inline SairIndex build_sair_index(const Dataset& ds, const LshParams& params) {
  params.validate();
  const HashFamilyKind kind = family_for(ds.kind);
  SairIndex index;
  for (std::uint32_t row = 0; row < ds.size(); ++row)
    for (std::size_t j = 0; j < ds.schema.size(); ++j) index.members[{j, ds.records[row].attrs[j]}].push_back(row);
  auto embedding_of = [&](std::uint32_t row) { return ds.embedding(row); };
  for (const auto& [key, rows] : index.members) {
    const DerivedParams d = partition_params(rows.size(), kind, params);
    PartitionIndex p;
    const std::uint64_t seed = splitmix64(params.seed ^ 0x53414952ULL ^ (std::uint64_t{key.first} << 32 | key.second));
    p.family = make_hash_family(kind, ds.dim, d.mu, d.ell, params.w, seed);
    p.tables = build_partition_index(rows, embedding_of, p.family);
    p.k_star_surplus = d.k_star_surplus;
    p.ell_clamped = d.clamped;
    index.groups.emplace(key, std::move(p));
  }
  return index;
}

/// Retrieves k points for every required value of every constrained
/// attribute, then keeps only records retrieved under all constrained
/// attributes. The pool may be too thin to satisfy the spec.
inline RetrievalReport sair_retrieve(const Query& query, const SairIndex& index, const Dataset& ds) {
  require(query.vector.size() == ds.dim, "sair_retrieve: query dimension mismatch");
  RetrievalReport report;
  const std::size_t k = query.spec.k();
  const std::size_t num_attrs = query.spec.num_constrained();
  std::unordered_map<RecordId, std::size_t> hits;
  std::unordered_map<RecordId, Candidate> first_seen;
  for (const auto& [j, counts] : query.spec.constraints()) {
    for (const auto& [v, need] : counts) {
      if (need == 0) continue;
      auto it = index.groups.find({j, v});
      if (it == index.groups.end()) continue;
      PartitionOutcome po;
      po.size = index.members.at({j, v}).size();
      po.quota = k;
      po.k_star = k + it->second.k_star_surplus;
      NearPiResult r = near_pi(query.vector, PartitionBitmap{}, it->second, po.quota, po.k_star, ds);
      po.collisions = r.collisions;
      po.achieved = r.candidates.size();
      report.scanned += r.scanned;
      report.relevant_size += po.size;
      report.partitions.push_back(po);
      for (auto& c : r.candidates) {
        ++hits[c.id];
        first_seen.try_emplace(c.id, std::move(c));
      }
    }
  }
  for (auto& [id, c] : first_seen)
    if (hits[id] == num_attrs) report.candidates.push_back(std::move(c));
  std::sort(report.candidates.begin(), report.candidates.end(), closer);
  return report;
}

/// Fraction of records holding each value, per attribute.
inline std::vector<std::vector<double>> marginal_proportions(const Dataset& ds) {
  std::vector<std::vector<double>> prop(ds.schema.size());
  for (std::size_t j = 0; j < ds.schema.size(); ++j) prop[j].assign(ds.schema.domain_size(j), 0.0);
  for (const auto& r : ds.records)
    for (std::size_t j = 0; j < r.attrs.size(); ++j) prop[j][r.attrs[j]] += 1.0;
  if (!ds.empty())
    for (auto& row : prop)
      for (auto& p : row) p /= static_cast<double>(ds.size());
  return prop;
}

/// ceil(k * product of proportions). The small slack keeps products such as
/// 10 * 0.5 * 0.4 from rounding up past the exact integer.
inline std::size_t jir_quota(std::size_t k, const std::vector<double>& proportions) {
  double x = static_cast<double>(k);
  for (double p : proportions) x *= p;
  return static_cast<std::size_t>(std::ceil(x - 1e-9));
}

/// Partition retrieval with product-of-marginals quotas over the constrained
/// attributes, using the main pipeline's per-partition indexes.
inline RetrievalReport jir_retrieve(const Query& query, const FairIndex& index, const Dataset& ds,
                                    const std::vector<std::vector<double>>& proportions) {
  return near_neighbor_with(query, index, ds, [&](PartitionBitmap b) {
    const auto decoded = decode_partition(b, index.layout);
    std::vector<double> props;
    for (const auto& [j, counts] : query.spec.constraints()) props.push_back(proportions[j][*decoded[j]]);
    return jir_quota(query.spec.k(), props);
  });
}

}  // namespace fairknn
