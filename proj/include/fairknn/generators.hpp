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

// Synthetic datasets, matching instances and query workloads.

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include "fairknn/dataset.hpp"
#include "fairknn/retrieval.hpp"

namespace fairknn {

/// Schema with attributes a0, a1, ... whose values are v0, v1, ...
inline AttributeSchema generic_schema(const std::vector<std::size_t>& domain_sizes) {
  std::vector<Attribute> attrs;
  for (std::size_t j = 0; j < domain_sizes.size(); ++j) {
    Attribute a{"a" + std::to_string(j), {}};
    for (std::size_t v = 0; v < domain_sizes[j]; ++v) a.domain.push_back("v" + std::to_string(v));
    attrs.push_back(std::move(a));
  }
  return AttributeSchema(std::move(attrs));
}

namespace detail {

inline std::vector<double> gaussian_vector(std::mt19937_64& rng, std::size_t d, double sd) {
  std::normal_distribution<double> g(0.0, sd);
  std::vector<double> x(d);
  for (auto& v : x) v = g(rng);
  return x;
}

inline std::vector<double> unit_vector(std::mt19937_64& rng, std::size_t d) {
  auto u = gaussian_vector(rng, d, 1.0);
  double n2 = 0.0;
  for (double v : u) n2 += v * v;
  const double inv = 1.0 / std::sqrt(n2);
  for (auto& v : u) v *= inv;
  return u;
}

inline ValueIndex uniform_value(std::mt19937_64& rng, std::size_t domain) {
  return static_cast<ValueIndex>(std::uniform_int_distribution<std::size_t>(0, domain - 1)(rng));
}

}  // namespace detail

struct SyntheticOptions {
  std::size_t n_total = 10050;
  std::size_t dim = 32;
  std::size_t tight_size = 50;
  double tight_radius = 1.0;
  double far_offset = 100.0;
  double far_spread = 0.0;  // 0 means far_offset / 4
  std::vector<std::size_t> domains = {2, 3, 2};
  double correlation = 0.0;  // chance that a1, a2, ... copy a0's value
  std::uint64_t seed = 1;
};

/// Two clusters: tight_size points uniform in the ball of radius tight_radius
/// around the origin, and the rest Gaussian around a point at distance
/// far_offset. Attribute values are drawn independently of the cluster, so
/// every value occurs in both.
inline Dataset gen_synthetic(const SyntheticOptions& o) {
  require(o.tight_size <= o.n_total, "gen_synthetic: tight_size exceeds n_total");
  require(o.dim >= 1, "gen_synthetic: dim must be positive");
  require(o.tight_radius > 0.0 && o.far_offset >= 0.0, "gen_synthetic: radii must be positive");
  require(o.correlation >= 0.0 && o.correlation <= 1.0, "gen_synthetic: correlation must lie in [0, 1]");
  std::mt19937_64 rng(o.seed);
  Dataset ds;
  ds.schema = generic_schema(o.domains);
  ds.dim = o.dim;
  const auto far_dir = detail::unit_vector(rng, o.dim);
  const double spread = o.far_spread > 0.0 ? o.far_spread : o.far_offset / 4.0;
  const double far_sd = spread / std::sqrt(static_cast<double>(o.dim));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ds.records.reserve(o.n_total);
  for (std::size_t i = 0; i < o.n_total; ++i) {
    VectorRecord r;
    r.id = i;
    if (i < o.tight_size) {
      const auto u = detail::unit_vector(rng, o.dim);
      const double radius = o.tight_radius * std::pow(unit(rng), 1.0 / static_cast<double>(o.dim));
      r.embedding.resize(o.dim);
      for (std::size_t t = 0; t < o.dim; ++t) r.embedding[t] = radius * u[t];
    } else {
      r.embedding = detail::gaussian_vector(rng, o.dim, far_sd);
      for (std::size_t t = 0; t < o.dim; ++t) r.embedding[t] += o.far_offset * far_dir[t];
    }
    r.attrs.resize(o.domains.size());
    for (std::size_t j = 0; j < o.domains.size(); ++j) {
      if (j > 0 && o.correlation > 0.0 && unit(rng) < o.correlation)
        r.attrs[j] = static_cast<ValueIndex>(r.attrs[0] % o.domains[j]);
      else
        r.attrs[j] = detail::uniform_value(rng, o.domains[j]);
    }
    ds.records.push_back(std::move(r));
  }
  return ds;
}

struct ThreeDmInstance {
  Dataset dataset;
  FairnessSpec spec;
  std::vector<double> query;  // origin; distances are the records' norms
};

/// Matching instance: attributes X, Y, Z with k_elements values each, one
/// record per triple, spec = every element exactly once. With `planted`, the
/// first k_elements records form a perfect matching.
inline ThreeDmInstance gen_3dm(std::size_t k_elements, std::size_t extra_triples, bool planted, std::uint64_t seed,
                               std::size_t dim = 2) {
  require(k_elements >= 1, "gen_3dm: k_elements must be positive");
  std::mt19937_64 rng(seed);
  ThreeDmInstance inst;
  auto& ds = inst.dataset;
  std::vector<Attribute> attrs;
  for (const char* name : {"X", "Y", "Z"}) {
    Attribute a{name, {}};
    for (std::size_t v = 0; v < k_elements; ++v) a.domain.push_back(std::string(1, name[0] + 32) + std::to_string(v));
    attrs.push_back(std::move(a));
  }
  ds.schema = AttributeSchema(std::move(attrs));
  ds.dim = dim;
  std::vector<std::vector<ValueIndex>> triples;
  if (planted) {
    std::vector<ValueIndex> ys(k_elements), zs(k_elements);
    std::iota(ys.begin(), ys.end(), 0u);
    std::iota(zs.begin(), zs.end(), 0u);
    std::shuffle(ys.begin(), ys.end(), rng);
    std::shuffle(zs.begin(), zs.end(), rng);
    for (std::size_t x = 0; x < k_elements; ++x) triples.push_back({static_cast<ValueIndex>(x), ys[x], zs[x]});
  }
  for (std::size_t t = 0; t < extra_triples; ++t)
    triples.push_back({detail::uniform_value(rng, k_elements), detail::uniform_value(rng, k_elements),
                       detail::uniform_value(rng, k_elements)});
  std::uniform_real_distribution<double> coord(-1.0, 1.0);
  for (std::size_t i = 0; i < triples.size(); ++i) {
    VectorRecord r;
    r.id = i;
    r.attrs = triples[i];
    r.embedding.resize(dim);
    for (auto& x : r.embedding) x = coord(rng);
    ds.records.push_back(std::move(r));
  }
  std::map<std::size_t, FairnessSpec::ValueCounts> cons;
  for (std::size_t j = 0; j < 3; ++j)
    for (std::size_t v = 0; v < k_elements; ++v) cons[j][static_cast<ValueIndex>(v)] = 1;
  inst.spec = FairnessSpec(std::move(cons), k_elements);
  inst.query.assign(dim, 0.0);
  return inst;
}

/// Necessary condition for feasibility, by counting only: for every required
/// (attribute, value), enough records carry that value while matching some
/// required value on every other constrained attribute.
inline bool count_feasible(const Dataset& ds, const FairnessSpec& spec) {
  std::map<std::pair<std::size_t, ValueIndex>, std::size_t> have;
  std::size_t eligible = 0;
  for (const auto& r : ds.records) {
    bool ok = true;
    for (const auto& [j, counts] : spec.constraints()) ok = ok && spec.required(j, r.attrs[j]) > 0;
    if (!ok) continue;
    ++eligible;
    for (const auto& [j, counts] : spec.constraints()) ++have[{j, r.attrs[j]}];
  }
  if (eligible < spec.k()) return false;
  for (const auto& [j, counts] : spec.constraints())
    for (const auto& [v, need] : counts)
      if (need > 0 && have[{j, v}] < need) return false;
  return true;
}

enum class QueryAnchor { Data, Center };
enum class SpecMode { Planted, Random };

struct QueryOptions {
  std::size_t count = 100;
  std::size_t k = 10;
  std::vector<std::size_t> attributes = {0, 1};  // constrained attributes
  QueryAnchor anchor = QueryAnchor::Data;
  std::vector<double> center;  // used with QueryAnchor::Center; empty means origin
  double perturbation = 0.25;  // expected norm of the offset from the anchor
  SpecMode spec_mode = SpecMode::Planted;
  std::size_t plant_pool = 0;  // plant from the nearest records to the query; 0 = whole dataset
  std::size_t max_retries = 1000;
  std::uint64_t seed = 7;
};

/// Queries whose specs pass count_feasible. Planted specs copy the value
/// counts of k distinct records, which also makes them truly feasible; random
/// specs draw each attribute's counts as a uniform multinomial and are retried
/// until they pass the count check.
inline std::vector<Query> gen_queries(const Dataset& ds, const QueryOptions& o) {
  require(!ds.empty(), "gen_queries: dataset is empty");
  require(o.k >= 1 && o.count >= 1, "gen_queries: need k >= 1 and count >= 1");
  require(!o.attributes.empty(), "gen_queries: at least one constrained attribute");
  for (std::size_t j : o.attributes) require(j < ds.schema.size(), "gen_queries: attribute index out of range");
  if (o.spec_mode == SpecMode::Planted && o.k > ds.size())
    throw InputError("gen_queries: k=" + std::to_string(o.k) + " exceeds the dataset size");
  std::mt19937_64 rng(o.seed);
  const double sd = o.perturbation / std::sqrt(static_cast<double>(ds.dim));
  std::vector<Query> out;
  out.reserve(o.count);
  for (std::size_t qi = 0; qi < o.count; ++qi) {
    Query q;
    if (o.anchor == QueryAnchor::Center) {
      q.vector = o.center.empty() ? std::vector<double>(ds.dim, 0.0) : o.center;
      require(q.vector.size() == ds.dim, "gen_queries: center dimension mismatch");
    } else {
      const auto row = std::uniform_int_distribution<std::size_t>(0, ds.size() - 1)(rng);
      q.vector = ds.records[row].embedding;
    }
    const auto noise = detail::gaussian_vector(rng, ds.dim, sd);
    for (std::size_t t = 0; t < ds.dim; ++t) q.vector[t] += noise[t];

    std::optional<FairnessSpec> spec;
    for (std::size_t attempt = 0; attempt < o.max_retries && !spec; ++attempt) {
      std::map<std::size_t, FairnessSpec::ValueCounts> cons;
      if (o.spec_mode == SpecMode::Planted) {
        std::vector<std::size_t> pool(ds.size());
        std::iota(pool.begin(), pool.end(), 0);
        if (o.plant_pool > 0 && o.plant_pool < pool.size()) {
          std::vector<std::pair<double, std::size_t>> by_dist;
          by_dist.reserve(ds.size());
          for (std::size_t r = 0; r < ds.size(); ++r)
            by_dist.emplace_back(distance(ds.records[r].embedding, q.vector, ds.kind), r);
          std::partial_sort(by_dist.begin(), by_dist.begin() + static_cast<std::ptrdiff_t>(o.plant_pool),
                            by_dist.end());
          pool.resize(o.plant_pool);
          for (std::size_t i = 0; i < o.plant_pool; ++i) pool[i] = by_dist[i].second;
        }
        if (pool.size() < o.k) throw InputError("gen_queries: plant_pool is smaller than k");
        for (std::size_t t = 0; t < o.k; ++t) {
          const auto pick = std::uniform_int_distribution<std::size_t>(t, pool.size() - 1)(rng);
          std::swap(pool[t], pool[pick]);
          for (std::size_t j : o.attributes) ++cons[j][ds.records[pool[t]].attrs[j]];
        }
      } else {
        for (std::size_t j : o.attributes)
          for (std::size_t t = 0; t < o.k; ++t) ++cons[j][detail::uniform_value(rng, ds.schema.domain_size(j))];
      }
      FairnessSpec candidate(std::move(cons), o.k);
      if (count_feasible(ds, candidate)) spec = std::move(candidate);
    }
    if (!spec)
      throw InputError("gen_queries: no count-feasible spec for query " + std::to_string(qi) + " after " +
                       std::to_string(o.max_retries) + " attempts");
    q.spec = std::move(*spec);
    out.push_back(std::move(q));
  }
  return out;
}

}  // namespace fairknn
