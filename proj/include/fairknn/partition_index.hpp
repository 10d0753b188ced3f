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

// Intersectional partitions encoded as fixed-layout bitmap words.
//
// Every protected attribute j owns a field of ceil(log2(|V_j| + 1)) bits.
// Value v is stored as v + 1 so the all-zeros field means "no value". The
// first attribute occupies the most significant field, so the three-attribute
// schema Gender(3) x Race(6) x Age(3) yields a 7-bit word laid out 2|3|2.

#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

#include "fairknn/core.hpp"

namespace fairknn {

using BitWord = std::uint64_t;

struct PartitionBitmap {
  BitWord bits = 0;

  friend auto operator<=>(const PartitionBitmap&, const PartitionBitmap&) = default;
};

struct PartitionBitmapHash {
  std::size_t operator()(const PartitionBitmap& b) const noexcept { return std::hash<BitWord>{}(b.bits); }
};

class BitLayout {
 public:
  static constexpr unsigned kMaxWidth = 64;

  BitLayout() = default;

  explicit BitLayout(const AttributeSchema& schema) {
    const std::size_t m = schema.size();
    widths_.resize(m);
    offsets_.resize(m);
    domain_sizes_.resize(m);
    unsigned total = 0;
    for (std::size_t j = 0; j < m; ++j) {
      domain_sizes_[j] = static_cast<std::uint32_t>(schema.domain_size(j));
      widths_[j] = field_width(domain_sizes_[j]);
      total += widths_[j];
    }
    if (total > kMaxWidth)
      throw InputError("attribute schema needs " + std::to_string(total) + " bitmap bits; at most 64 are supported");
    width_ = total;
    unsigned offset = total;
    for (std::size_t j = 0; j < m; ++j) {
      offset -= widths_[j];
      offsets_[j] = offset;
    }
  }

  /// ceil(log2(size + 1)); never less than one bit.
  static unsigned field_width(std::uint32_t domain_size) {
    return std::max(1u, static_cast<unsigned>(std::bit_width(domain_size)));
  }

  [[nodiscard]] std::size_t num_attributes() const { return widths_.size(); }
  [[nodiscard]] unsigned width() const { return width_; }
  [[nodiscard]] unsigned field_width_of(std::size_t j) const { return widths_.at(j); }
  [[nodiscard]] unsigned offset(std::size_t j) const { return offsets_.at(j); }
  [[nodiscard]] std::uint32_t domain_size(std::size_t j) const { return domain_sizes_.at(j); }

  [[nodiscard]] BitWord field_mask(std::size_t j) const {
    const BitWord ones = widths_.at(j) == 64 ? ~BitWord{0} : ((BitWord{1} << widths_[j]) - 1);
    return ones << offsets_[j];
  }

  [[nodiscard]] BitWord field(BitWord bits, std::size_t j) const {
    return (bits & field_mask(j)) >> offsets_[j];
  }

  friend bool operator==(const BitLayout&, const BitLayout&) = default;

 private:
  std::vector<unsigned> widths_;
  std::vector<unsigned> offsets_;
  std::vector<std::uint32_t> domain_sizes_;
  unsigned width_ = 0;
};

inline PartitionBitmap encode_partition(std::span<const ValueIndex> attrs, const BitLayout& layout) {
  require(attrs.size() == layout.num_attributes(), "encode_partition: attribute count mismatch");
  BitWord bits = 0;
  for (std::size_t j = 0; j < attrs.size(); ++j) {
    require(attrs[j] < layout.domain_size(j), "encode_partition: value index out of domain");
    bits |= static_cast<BitWord>(attrs[j] + 1) << layout.offset(j);
  }
  return {bits};
}

/// Per-attribute values; std::nullopt marks an absent (all-zeros) field.
using DecodedPartition = std::vector<std::optional<ValueIndex>>;

inline DecodedPartition decode_partition(PartitionBitmap b, const BitLayout& layout) {
  const std::size_t m = layout.num_attributes();
  if (layout.width() < 64 && (b.bits >> layout.width()) != 0)
    throw InputError("malformed partition bitmap: bits set beyond layout width");
  DecodedPartition out(m);
  for (std::size_t j = 0; j < m; ++j) {
    const BitWord code = layout.field(b.bits, j);
    if (code == 0) continue;
    if (code > layout.domain_size(j))
      throw InputError("malformed partition bitmap: field " + std::to_string(j) + " holds code " +
                       std::to_string(code));
    out[j] = static_cast<ValueIndex>(code - 1);
  }
  return out;
}

/// Non-empty partitions and the dataset rows they hold. Row positions index
/// the dataset the registry was built from.
class PartitionRegistry {
 public:
  using Members = std::vector<std::uint32_t>;

  PartitionRegistry() = default;

  [[nodiscard]] const BitLayout& layout() const { return layout_; }
  [[nodiscard]] std::size_t size() const { return order_.size(); }
  [[nodiscard]] bool empty() const { return order_.empty(); }

  /// Partitions in ascending bitmap order.
  [[nodiscard]] const std::vector<PartitionBitmap>& partitions() const { return order_; }

  [[nodiscard]] const Members& members(PartitionBitmap b) const {
    auto it = buckets_.find(b);
    if (it == buckets_.end()) throw ContractViolation("partition not present in registry");
    return it->second;
  }

  [[nodiscard]] bool contains(PartitionBitmap b) const { return buckets_.contains(b); }

  [[nodiscard]] std::size_t total_members() const {
    std::size_t n = 0;
    for (const auto& [b, rows] : buckets_) n += rows.size();
    return n;
  }

  /// Rebuilds from explicit buckets (deserialization).
  static PartitionRegistry from_buckets(BitLayout layout, std::vector<std::pair<PartitionBitmap, Members>> buckets) {
    PartitionRegistry reg;
    reg.layout_ = std::move(layout);
    for (auto& [b, rows] : buckets) {
      require(!rows.empty(), "registry bucket must be non-empty");
      require(reg.buckets_.emplace(b, std::move(rows)).second, "duplicate registry bucket");
      reg.order_.push_back(b);
    }
    std::sort(reg.order_.begin(), reg.order_.end());
    return reg;
  }

  template <typename Records>
  friend PartitionRegistry build_registry(const Records& records, const BitLayout& layout);

 private:
  BitLayout layout_;
  std::unordered_map<PartitionBitmap, Members, PartitionBitmapHash> buckets_;
  std::vector<PartitionBitmap> order_;
};

/// Groups records by their attribute tuple. `Records` is any range whose
/// elements expose an `attrs` sequence (VectorRecord, Dataset rows, ...).
template <typename Records>
PartitionRegistry build_registry(const Records& records, const BitLayout& layout) {
  PartitionRegistry reg;
  reg.layout_ = layout;
  std::uint32_t row = 0;
  for (const auto& rec : records) {
    const PartitionBitmap b = encode_partition(rec.attrs, layout);
    auto [it, inserted] = reg.buckets_.try_emplace(b);
    if (inserted) reg.order_.push_back(b);
    it->second.push_back(row++);
  }
  std::sort(reg.order_.begin(), reg.order_.end());
  return reg;
}

struct QueryMask {
  BitWord mask = 0;
  std::vector<BitWord> query_bitmaps;
};

/// Enumerates the Cartesian product of values with a positive required count
/// over the constrained attributes. Unconstrained fields stay zero.
inline QueryMask query_mask(const FairnessSpec& spec, const BitLayout& layout) {
  QueryMask qm;
  std::vector<std::vector<BitWord>> field_codes;
  for (const auto& [j, counts] : spec.constraints()) {
    require(j < layout.num_attributes(), "query_mask: attribute index out of range");
    qm.mask |= layout.field_mask(j);
    std::vector<BitWord> codes;
    for (const auto& [v, c] : counts) {
      require(v < layout.domain_size(j), "query_mask: value index out of domain");
      if (c > 0) codes.push_back(static_cast<BitWord>(v + 1) << layout.offset(j));
    }
    field_codes.push_back(std::move(codes));
  }
  std::vector<BitWord> acc{0};
  for (const auto& codes : field_codes) {
    std::vector<BitWord> next;
    next.reserve(acc.size() * codes.size());
    for (BitWord partial : acc)
      for (BitWord code : codes) next.push_back(partial | code);
    acc = std::move(next);
  }
  if (spec.constraints().empty()) acc.clear();
  std::sort(acc.begin(), acc.end());
  qm.query_bitmaps = std::move(acc);
  return qm;
}

/// ((b_pi & mask) ^ b_q) == 0 for some query bitmap b_q.
inline bool is_relevant(PartitionBitmap b, const QueryMask& qm, std::size_t* comparisons = nullptr) {
  const BitWord masked = b.bits & qm.mask;
  for (BitWord bq : qm.query_bitmaps) {
    if (comparisons) ++*comparisons;
    if ((masked ^ bq) == 0) return true;
  }
  return false;
}

/// Stored partitions matching the query mask, ascending by bitmap value.
/// Performs one comparison per (partition, query bitmap) pair.
inline std::vector<PartitionBitmap> relevant_partitions(const PartitionRegistry& reg, const QueryMask& qm,
                                                        std::size_t* comparisons = nullptr) {
  std::vector<PartitionBitmap> out;
  for (PartitionBitmap b : reg.partitions()) {
    const BitWord masked = b.bits & qm.mask;
    bool hit = false;
    for (BitWord bq : qm.query_bitmaps) {
      if (comparisons) ++*comparisons;
      hit |= (masked ^ bq) == 0;
    }
    if (hit) out.push_back(b);
  }
  return out;
}

}  // namespace fairknn
