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

// Single-file persistence of a FairIndex. Embeddings are not stored; the
// file records a fingerprint of the dataset it was built from instead.

#pragma once

#include <algorithm>
#include <string>

#include "fairknn/binary_io.hpp"
#include "fairknn/dataset.hpp"
#include "fairknn/retrieval.hpp"

namespace fairknn {

inline constexpr std::string_view kIndexMagic = "FKNNINDX";
inline constexpr std::uint32_t kIndexVersion = 1;

/// FNV-1a over the packed binary encoding.
inline std::uint64_t dataset_fingerprint(const Dataset& ds) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : encode_binary(ds)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

struct StoredIndex {
  FairIndex index;
  std::uint64_t fingerprint = 0;
};

inline std::string encode_index(const FairIndex& index, std::uint64_t fingerprint) {
  io::BinaryWriter w;
  w.bytes(kIndexMagic);
  w.u32(kIndexVersion);
  w.u64(fingerprint);

  w.u32(static_cast<std::uint32_t>(index.schema.size()));
  for (const auto& a : index.schema.attributes()) {
    w.str(a.name);
    w.u32(static_cast<std::uint32_t>(a.domain.size()));
    for (const auto& v : a.domain) w.str(v);
  }
  w.u8(static_cast<std::uint8_t>(index.kind.metric));
  w.f64(index.kind.p);
  w.u8(static_cast<std::uint8_t>(index.family_kind));

  const LshParams& p = index.params;
  for (double x : {p.R, p.c, p.w, p.delta}) w.f64(x);
  for (std::size_t x : {p.K, p.mu, p.ell, p.ell_max}) w.u64(x);
  w.u64(p.seed);

  w.u64(index.registry.size());
  for (PartitionBitmap b : index.registry.partitions()) {
    const auto& rows = index.registry.members(b);
    w.u64(b.bits);
    w.u64(rows.size());
    for (auto r : rows) w.u32(r);
  }

  w.u64(index.partitions.size());
  for (const auto& [b, part] : index.partitions) {
    w.u64(b.bits);
    const HashFamily& f = part.family;
    w.u8(static_cast<std::uint8_t>(f.kind));
    for (std::size_t x : {f.dim, f.mu, f.ell}) w.u64(x);
    w.f64(f.w);
    w.u64(f.projections.size());
    for (double x : f.projections) w.f64(x);
    w.u64(f.offsets.size());
    for (double x : f.offsets) w.f64(x);
    w.u64(part.k_star_surplus);
    w.u8(part.ell_clamped ? 1 : 0);
    w.u64(part.tables.tables.size());
    for (const auto& table : part.tables.tables) {
      // Buckets in key order so equal indexes give equal files.
      std::vector<const LshTables::Table::value_type*> buckets;
      for (const auto& entry : table) buckets.push_back(&entry);
      std::sort(buckets.begin(), buckets.end(), [](auto* x, auto* y) { return x->first < y->first; });
      w.u64(buckets.size());
      for (const auto* entry : buckets) {
        w.u32(static_cast<std::uint32_t>(entry->first.size()));
        for (auto v : entry->first) w.i64(v);
        w.u64(entry->second.size());
        for (auto r : entry->second) w.u32(r);
      }
    }
  }
  return w.buffer();
}

inline StoredIndex decode_index(io::BinaryReader& r) {
  if (r.bytes(kIndexMagic.size()) != kIndexMagic) throw InputError("'" + r.source() + "': not a fairknn index file");
  if (const auto version = r.u32(); version != kIndexVersion)
    throw InputError("'" + r.source() + "': unsupported index version " + std::to_string(version) + " (expected " +
                     std::to_string(kIndexVersion) + ")");
  StoredIndex out;
  out.fingerprint = r.u64();
  FairIndex& index = out.index;

  std::vector<Attribute> attrs(r.u32());
  for (auto& a : attrs) {
    a.name = r.str();
    a.domain.resize(r.u32());
    for (auto& v : a.domain) v = r.str();
  }
  index.schema = AttributeSchema(std::move(attrs));
  index.layout = BitLayout(index.schema);
  const auto metric = r.u8();
  if (metric > static_cast<std::uint8_t>(DistanceMetric::Minkowski))
    throw InputError("'" + r.source() + "': unknown distance metric code");
  index.kind.metric = static_cast<DistanceMetric>(metric);
  index.kind.p = r.f64();
  const auto fk = r.u8();
  if (fk > static_cast<std::uint8_t>(HashFamilyKind::AngularSign))
    throw InputError("'" + r.source() + "': unknown hash family code");
  index.family_kind = static_cast<HashFamilyKind>(fk);

  LshParams& p = index.params;
  p.R = r.f64();
  p.c = r.f64();
  p.w = r.f64();
  p.delta = r.f64();
  p.K = r.u64();
  p.mu = r.u64();
  p.ell = r.u64();
  p.ell_max = r.u64();
  p.seed = r.u64();

  std::vector<std::pair<PartitionBitmap, PartitionRegistry::Members>> buckets(r.u64());
  for (auto& [b, rows] : buckets) {
    b.bits = r.u64();
    rows.resize(r.u64());
    for (auto& row : rows) row = r.u32();
  }
  index.registry = PartitionRegistry::from_buckets(index.layout, std::move(buckets));

  const std::uint64_t num_parts = r.u64();
  for (std::uint64_t i = 0; i < num_parts; ++i) {
    const PartitionBitmap b{r.u64()};
    PartitionIndex part;
    HashFamily& f = part.family;
    f.kind = static_cast<HashFamilyKind>(r.u8());
    f.dim = r.u64();
    f.mu = r.u64();
    f.ell = r.u64();
    f.w = r.f64();
    f.projections.resize(r.u64());
    for (auto& x : f.projections) x = r.f64();
    f.offsets.resize(r.u64());
    for (auto& x : f.offsets) x = r.f64();
    if (f.projections.size() != f.ell * f.mu * f.dim) throw InputError("'" + r.source() + "': corrupt hash family");
    part.k_star_surplus = r.u64();
    part.ell_clamped = r.u8() != 0;
    part.tables.tables.resize(r.u64());
    for (auto& table : part.tables.tables) {
      const std::uint64_t nb = r.u64();
      for (std::uint64_t t = 0; t < nb; ++t) {
        CompoundKey key(r.u32());
        for (auto& v : key) v = r.i64();
        LshTables::Bucket rows(r.u64());
        for (auto& row : rows) row = r.u32();
        table.emplace(std::move(key), std::move(rows));
      }
    }
    if (!index.registry.contains(b)) throw InputError("'" + r.source() + "': index partition missing from registry");
    index.partitions.emplace(b, std::move(part));
  }
  if (!r.at_end()) throw InputError("'" + r.source() + "': trailing bytes after index");
  return out;
}

inline void save_index(const FairIndex& index, std::uint64_t fingerprint, const std::string& path) {
  io::BinaryWriter w;
  w.bytes(encode_index(index, fingerprint));
  w.save(path);
}

inline StoredIndex load_index(const std::string& path) {
  auto reader = io::BinaryReader::from_file(path);
  return decode_index(reader);
}

}  // namespace fairknn
