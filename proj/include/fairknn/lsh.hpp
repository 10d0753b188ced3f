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
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "fairknn/core.hpp"

namespace fairknn {

struct LshParams {
  double R = 1.0;       // near radius
  double c = 2.0;       // approximation factor, > 1
  double w = 4.0;       // p-stable bucket width
  double delta = 0.1;   // failure budget in (0, 1)
  std::size_t K = 10;   // max near points per query
  std::size_t mu = 0;   // concatenation length; 0 derives it per partition
  std::size_t ell = 0;  // table count; 0 derives it per partition
  std::size_t ell_max = 512;
  std::uint64_t seed = 42;

  void validate() const {
    require(c > 1.0, "LSH approximation factor c must exceed 1");
    require(delta > 0.0 && delta < 1.0, "LSH failure budget delta must lie in (0, 1)");
    require(R > 0.0 && std::isfinite(R), "LSH radius R must be positive");
    require(w > 0.0, "LSH bucket width w must be positive");
    require(ell_max >= 1, "ell_max must be at least 1");
  }

  friend bool operator==(const LshParams&, const LshParams&) = default;
};

enum class HashFamilyKind : std::uint8_t { PStableL2 = 0, AngularSign = 1 };

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Collision probability of one p-stable base hash for two points at
/// Euclidean distance r:  p(r) = int_0^w (1/r) f(t/r) (1 - t/w) dt, with f
/// the density of |N(0,1)|. Evaluated by composite Simpson quadrature.
inline double pstable_collision_probability(double r, double w) {
  require(w > 0.0, "bucket width must be positive");
  if (r <= 0.0) return 1.0;
  constexpr int kIntervals = 4096;
  const double h = w / kIntervals;
  const double norm = 2.0 / std::sqrt(2.0 * std::numbers::pi);
  auto integrand = [&](double t) {
    const double s = t / r;
    return norm * std::exp(-0.5 * s * s) / r * (1.0 - t / w);
  };
  double acc = integrand(0.0) + integrand(w);
  for (int i = 1; i < kIntervals; ++i) acc += integrand(i * h) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

/// Sign-hash collision probability for vectors at angle theta.
inline double angular_collision_probability(double theta) { return 1.0 - theta / std::numbers::pi; }

/// Near and far collision probabilities (p1 at R, p2 at cR) of one base hash.
/// For the angular family, R is a cosine-based distance 1 - cos(theta).
inline std::pair<double, double> base_collision_probabilities(HashFamilyKind kind, const LshParams& params) {
  if (kind == HashFamilyKind::PStableL2)
    return {pstable_collision_probability(params.R, params.w),
            pstable_collision_probability(params.c * params.R, params.w)};
  auto angle = [](double cos_dist) { return std::acos(std::clamp(1.0 - cos_dist, -1.0, 1.0)); };
  return {angular_collision_probability(angle(params.R)), angular_collision_probability(angle(params.c * params.R))};
}

struct DerivedParams {
  std::size_t mu = 1;
  std::size_t ell = 1;
  std::size_t k_star_surplus = 0;  // ceil(2 ell / delta)
  double rho = 0.0;
  double ell_unclamped = 1.0;
  bool clamped = false;
};

inline std::size_t candidate_surplus(std::size_t ell, double delta) {
  return static_cast<std::size_t>(std::ceil(2.0 * static_cast<double>(ell) / delta));
}

/// Concatenation length, table count and candidate surplus for a partition of
/// n_pi points. Natural logarithms throughout.
inline DerivedParams derive_params(std::size_t n_pi, double p1, double p2, std::size_t K, double delta,
                                   std::size_t ell_max = 512) {
  require(0.0 < p2 && p2 < p1 && p1 < 1.0, "derive_params: need 0 < p2 < p1 < 1");
  require(n_pi >= 1, "derive_params: partition must be non-empty");
  require(delta > 0.0 && delta < 1.0, "derive_params: delta must lie in (0, 1)");
  require(K >= 1, "derive_params: K must be positive");
  DerivedParams out;
  const double n = static_cast<double>(n_pi);
  out.mu = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::log(n) / std::log(1.0 / p2))));
  out.rho = std::log(1.0 / p1) / std::log(1.0 / p2);
  out.ell_unclamped = std::ceil(std::pow(n, out.rho) * std::log(2.0 * static_cast<double>(K) / delta));
  double ell = std::max(1.0, out.ell_unclamped);
  if (ell > static_cast<double>(ell_max)) {
    ell = static_cast<double>(ell_max);
    out.clamped = true;
  }
  out.ell = static_cast<std::size_t>(ell);
  out.k_star_surplus = candidate_surplus(out.ell, delta);
  return out;
}

/// Random projections for ell tables of mu base hashes each. Stored row-major
/// as [table][component][dimension].
struct HashFamily {
  HashFamilyKind kind = HashFamilyKind::PStableL2;
  std::size_t dim = 0;
  std::size_t mu = 1;
  std::size_t ell = 1;
  double w = 1.0;
  std::vector<double> projections;  // ell * mu * dim
  std::vector<double> offsets;      // ell * mu, PStableL2 only

  [[nodiscard]] std::span<const double> projection(std::size_t table, std::size_t i) const {
    return {projections.data() + (table * mu + i) * dim, dim};
  }

  friend bool operator==(const HashFamily&, const HashFamily&) = default;
};

inline HashFamily make_hash_family(HashFamilyKind kind, std::size_t dim, std::size_t mu, std::size_t ell, double w,
                                   std::uint64_t seed) {
  require(mu >= 1 && ell >= 1, "hash family needs mu >= 1 and ell >= 1");
  require(dim >= 1, "hash family needs a positive dimension");
  if (kind == HashFamilyKind::AngularSign) require(mu <= 63, "angular compound keys hold at most 63 bits");
  HashFamily f;
  f.kind = kind;
  f.dim = dim;
  f.mu = mu;
  f.ell = ell;
  f.w = w;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  f.projections.resize(ell * mu * dim);
  for (auto& x : f.projections) x = gauss(rng);
  if (kind == HashFamilyKind::PStableL2) {
    std::uniform_real_distribution<double> unif(0.0, w);
    f.offsets.resize(ell * mu);
    for (auto& b : f.offsets) b = unif(rng);
  } else {
    for (std::size_t t = 0; t < ell * mu; ++t) {
      double* u = f.projections.data() + t * dim;
      double n2 = 0.0;
      for (std::size_t i = 0; i < dim; ++i) n2 += u[i] * u[i];
      const double inv = 1.0 / std::sqrt(n2);
      for (std::size_t i = 0; i < dim; ++i) u[i] *= inv;
    }
  }
  return f;
}

/// mu bucket indices (PStableL2) or a single packed mu-bit word (AngularSign).
using CompoundKey = std::vector<std::int64_t>;

struct CompoundKeyHash {
  std::size_t operator()(const CompoundKey& key) const noexcept {
    std::uint64_t h = 0x243f6a8885a308d3ULL;
    for (std::int64_t v : key) h = splitmix64(h ^ static_cast<std::uint64_t>(v));
    return static_cast<std::size_t>(h);
  }
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline CompoundKey compound_hash(std::span<const double> x, const HashFamily& family, std::size_t table) {
  require(x.size() == family.dim, "compound_hash: dimension mismatch");
  require(table < family.ell, "compound_hash: table index out of range");
  if (family.kind == HashFamilyKind::PStableL2) {
    CompoundKey key(family.mu);
    for (std::size_t i = 0; i < family.mu; ++i) {
      const double proj = dot(family.projection(table, i), x) + family.offsets[table * family.mu + i];
      key[i] = static_cast<std::int64_t>(std::floor(proj / family.w));
    }
    return key;
  }
  std::int64_t bits = 0;
  for (std::size_t i = 0; i < family.mu; ++i)
    if (dot(family.projection(table, i), x) >= 0.0) bits |= std::int64_t{1} << i;
  return {bits};
}

struct LshTables {
  using Bucket = std::vector<std::uint32_t>;
  using Table = std::unordered_map<CompoundKey, Bucket, CompoundKeyHash>;

  std::vector<Table> tables;

  [[nodiscard]] std::size_t total_entries() const {
    std::size_t n = 0;
    for (const auto& t : tables)
      for (const auto& [key, bucket] : t) n += bucket.size();
    return n;
  }
};

/// Inserts every member into one bucket per table. `embedding_of(row)` returns
/// the row's vector as a span.
template <typename EmbeddingFn>
LshTables build_partition_index(std::span<const std::uint32_t> members, EmbeddingFn&& embedding_of,
                                const HashFamily& family) {
  require(!members.empty(), "build_partition_index: partition must be non-empty");
  LshTables out;
  out.tables.resize(family.ell);
  for (std::uint32_t row : members) {
    const std::span<const double> x = embedding_of(row);
    for (std::size_t j = 0; j < family.ell; ++j) out.tables[j][compound_hash(x, family, j)].push_back(row);
  }
  return out;
}

struct ProbeResult {
  std::vector<std::uint32_t> rows;  // distinct, first-encountered order
  std::size_t collisions = 0;       // distinct colliding rows, counted up to the cap
  bool truncated = false;           // more distinct rows collided than the cap allowed
};

/// Union of the query's buckets over all tables, deduplicated. Keeps at most
/// `cap` rows in table-then-bucket order and stops at the first distinct row
/// beyond the cap.
inline ProbeResult probe(std::span<const double> q, const LshTables& tables, const HashFamily& family,
                         std::size_t cap = static_cast<std::size_t>(-1)) {
  ProbeResult out;
  std::unordered_set<std::uint32_t> seen;
  for (std::size_t j = 0; j < tables.tables.size() && !out.truncated; ++j) {
    const auto& table = tables.tables[j];
    auto it = table.find(compound_hash(q, family, j));
    if (it == table.end()) continue;
    for (std::uint32_t row : it->second) {
      if (seen.contains(row)) continue;
      if (out.rows.size() == cap) {
        out.truncated = true;
        break;
      }
      seen.insert(row);
      out.rows.push_back(row);
    }
  }
  out.collisions = out.rows.size();
  return out;
}

}  // namespace fairknn
