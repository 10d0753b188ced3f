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

#include <gtest/gtest.h>

#include <random>
#include <set>

#include "fairknn/partition_index.hpp"
#include "test_support.hpp"

namespace fairknn {
namespace {

using testing::bus_driver_schema;
using testing::drivers_dataset;
using Tuple = std::vector<ValueIndex>;

// Gender / Race / Age value indices of the bus-driver schema.
constexpr ValueIndex kMale = 0, kFemale = 1, kNonBinary = 2;
constexpr ValueIndex kWhite = 0, kHispanic = 2, kMixed = 5;
constexpr ValueIndex kUnder30 = 0, k30to50 = 1, kOver50 = 2;

TEST(BitLayout, FieldWidths) {
  const BitLayout layout(bus_driver_schema());
  EXPECT_EQ(layout.field_width_of(0), 2u);
  EXPECT_EQ(layout.field_width_of(1), 3u);
  EXPECT_EQ(layout.field_width_of(2), 2u);
  EXPECT_EQ(layout.width(), 7u);
  EXPECT_EQ(BitLayout::field_width(1), 1u);
  EXPECT_EQ(BitLayout::field_width(7), 3u);
  EXPECT_EQ(BitLayout::field_width(8), 4u);
}

TEST(BitLayout, RejectsMoreThan64Bits) {
  std::vector<Attribute> attrs;
  for (int j = 0; j < 17; ++j) attrs.push_back({"a" + std::to_string(j), {"0", "1", "2", "3", "4", "5", "6", "7"}});
  EXPECT_THROW(BitLayout{AttributeSchema(attrs)}, InputError);
  attrs.pop_back();
  EXPECT_EQ(BitLayout{AttributeSchema(attrs)}.width(), 64u);
}

TEST(EncodePartition, WorkedExamples) {
  const BitLayout layout(bus_driver_schema());
  EXPECT_EQ(encode_partition(Tuple{kFemale, kHispanic, k30to50}, layout).bits, 0b10'011'10u);
  EXPECT_EQ(encode_partition(Tuple{kMale, kWhite, kUnder30}, layout).bits, 0b01'001'01u);
  const BitLayout single(AttributeSchema(std::vector<Attribute>{{"A", {"a"}}}));
  EXPECT_EQ(encode_partition(Tuple{0}, single).bits, 0b1u);
  EXPECT_THROW(encode_partition(Tuple{3, 0, 0}, layout), ContractViolation);
  EXPECT_THROW(encode_partition(Tuple{0, 0}, layout), ContractViolation);
}

TEST(DecodePartition, WorkedExamples) {
  const BitLayout layout(bus_driver_schema());
  EXPECT_EQ(decode_partition({0b10'011'10}, layout), (DecodedPartition{kFemale, kHispanic, k30to50}));
  EXPECT_EQ(decode_partition({0b11'110'11}, layout), (DecodedPartition{kNonBinary, kMixed, kOver50}));
  EXPECT_EQ(decode_partition({0}, layout), (DecodedPartition{std::nullopt, std::nullopt, std::nullopt}));
  EXPECT_EQ(decode_partition({0b01'000'00}, layout), (DecodedPartition{kMale, std::nullopt, std::nullopt}));
  // Race code 7 does not exist.
  EXPECT_THROW(decode_partition({0b01'111'01}, layout), InputError);
  EXPECT_THROW(decode_partition({1u << 7}, layout), InputError);
}

TEST(EncodePartition, ExhaustiveRoundTrip) {
  std::mt19937_64 rng(11);
  for (std::size_t m = 1; m <= 6; ++m) {
    std::vector<Attribute> attrs;
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t size = (j == 0) ? 8 : std::uniform_int_distribution<std::size_t>(1, 8)(rng);
      Attribute a{"a" + std::to_string(j), {}};
      for (std::size_t v = 0; v < size; ++v) a.domain.push_back(std::to_string(v));
      attrs.push_back(a);
    }
    const AttributeSchema schema(attrs);
    const BitLayout layout(schema);
    Tuple t(m, 0);
    std::set<BitWord> seen;
    while (true) {
      const PartitionBitmap b = encode_partition(t, layout);
      const auto back = decode_partition(b, layout);
      for (std::size_t j = 0; j < m; ++j) ASSERT_EQ(back[j], t[j]);
      ASSERT_TRUE(seen.insert(b.bits).second);
      std::size_t j = 0;
      while (j < m && ++t[j] == schema.domain_size(j)) t[j++] = 0;
      if (j == m) break;
    }
  }
}

TEST(BuildRegistry, DriversHaveTenSingletons) {
  const Dataset ds = drivers_dataset();
  const BitLayout layout(ds.schema);
  const auto reg = build_registry(ds.records, layout);
  EXPECT_EQ(reg.size(), 10u);
  for (auto b : reg.partitions()) EXPECT_EQ(reg.members(b).size(), 1u);
  EXPECT_TRUE(std::is_sorted(reg.partitions().begin(), reg.partitions().end()));
}

TEST(BuildRegistry, EmptyAndShared) {
  const BitLayout layout(bus_driver_schema());
  EXPECT_TRUE(build_registry(std::vector<VectorRecord>{}, layout).empty());
  std::vector<VectorRecord> recs;
  for (RecordId i = 0; i < 4; ++i) recs.push_back({i, {0.0}, {kFemale, kHispanic, k30to50}});
  const auto reg = build_registry(recs, layout);
  ASSERT_EQ(reg.size(), 1u);
  EXPECT_EQ(reg.members({0b10'011'10}).size(), 4u);
}

TEST(BuildRegistry, DisjointCover) {
  std::mt19937_64 rng(3);
  const AttributeSchema schema = bus_driver_schema();
  const BitLayout layout(schema);
  std::vector<VectorRecord> recs;
  for (RecordId i = 0; i < 2000; ++i) {
    Tuple t(3);
    for (std::size_t j = 0; j < 3; ++j)
      t[j] = static_cast<ValueIndex>(std::uniform_int_distribution<std::size_t>(0, schema.domain_size(j) - 1)(rng));
    recs.push_back({i, {0.0}, t});
  }
  const auto reg = build_registry(recs, layout);
  std::vector<int> hits(recs.size(), 0);
  std::size_t total = 0;
  for (auto b : reg.partitions()) {
    ASSERT_FALSE(reg.members(b).empty());
    for (auto row : reg.members(b)) {
      ++hits[row];
      EXPECT_EQ(encode_partition(recs[row].attrs, layout), b);
    }
    total += reg.members(b).size();
  }
  EXPECT_EQ(total, recs.size());
  EXPECT_TRUE(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
}

FairnessSpec gender_race_spec() {
  // Gender: Male 2, Female 3; Race: Hispanic 4, White 1.
  return FairnessSpec({{0, {{kMale, 2}, {kFemale, 3}}}, {1, {{kHispanic, 4}, {kWhite, 1}}}}, 5);
}

TEST(QueryMask, GenderRaceQuery) {
  const BitLayout layout(bus_driver_schema());
  const QueryMask qm = query_mask(gender_race_spec(), layout);
  EXPECT_EQ(qm.mask, 0b11'111'00u);
  ASSERT_EQ(qm.query_bitmaps.size(), 4u);
  const std::set<BitWord> expected = {0b01'011'00, 0b10'011'00, 0b01'001'00, 0b10'001'00};
  EXPECT_EQ(std::set<BitWord>(qm.query_bitmaps.begin(), qm.query_bitmaps.end()), expected);
  for (BitWord b : qm.query_bitmaps) EXPECT_EQ(b & ~qm.mask, 0u);
}

TEST(QueryMask, Cardinality) {
  const BitLayout layout(bus_driver_schema());
  EXPECT_EQ(query_mask(FairnessSpec({{1, {{kMixed, 3}}}}, 3), layout).query_bitmaps.size(), 1u);
  const FairnessSpec spec({{0, {{0, 1}, {1, 1}, {2, 0}}}, {1, {{0, 1}, {3, 0}, {5, 1}, {4, 0}}}, {2, {{1, 2}}}}, 2);
  EXPECT_EQ(query_mask(spec, layout).query_bitmaps.size(), 4u);  // zero counts are skipped
  const FairnessSpec three({{0, {{0, 1}, {1, 1}}}, {1, {{0, 1}, {2, 1}, {4, 0}}}, {2, {{0, 1}, {2, 1}}}}, 2);
  const FairnessSpec product({{0, {{0, 2}, {1, 1}}}, {1, {{0, 1}, {2, 1}, {4, 1}}}, {2, {{0, 2}, {2, 1}}}}, 3);
  EXPECT_EQ(query_mask(product, layout).query_bitmaps.size(), 12u);
  EXPECT_EQ(query_mask(three, layout).query_bitmaps.size(), 8u);
}

std::set<RecordId> relevant_ids(const Dataset& ds, const FairnessSpec& spec) {
  const BitLayout layout(ds.schema);
  const auto reg = build_registry(ds.records, layout);
  std::set<RecordId> ids;
  for (auto b : relevant_partitions(reg, query_mask(spec, layout)))
    for (auto row : reg.members(b)) ids.insert(ds.records[row].id);
  return ids;
}

TEST(RelevantPartitions, GenderRaceQueryOverDrivers) {
  EXPECT_EQ(relevant_ids(drivers_dataset(), gender_race_spec()), (std::set<RecordId>{1, 5, 6}));
}

TEST(RelevantPartitions, SingleTupleAndAbsent) {
  const Dataset ds = drivers_dataset();
  const FairnessSpec exact({{0, {{kFemale, 1}}}, {1, {{kHispanic, 1}}}, {2, {{k30to50, 1}}}}, 1);
  EXPECT_TRUE(relevant_ids(ds, exact).empty());
  const FairnessSpec row4({{0, {{kFemale, 1}}}, {1, {{3, 1}}}, {2, {{k30to50, 1}}}}, 1);
  EXPECT_EQ(relevant_ids(ds, row4), (std::set<RecordId>{4}));
  const FairnessSpec absent({{0, {{kNonBinary, 2}}}, {1, {{kMixed, 2}}}}, 2);
  EXPECT_TRUE(relevant_ids(ds, absent).empty());
}

TEST(RelevantPartitions, MatchesBruteForceAndCountsComparisons) {
  std::mt19937_64 rng(5);
  const AttributeSchema schema = bus_driver_schema();
  const BitLayout layout(schema);
  std::vector<VectorRecord> recs;
  for (RecordId i = 0; i < 300; ++i) {
    Tuple t(3);
    for (std::size_t j = 0; j < 3; ++j)
      t[j] = static_cast<ValueIndex>(std::uniform_int_distribution<std::size_t>(0, schema.domain_size(j) - 1)(rng));
    recs.push_back({i, {0.0}, t});
  }
  const auto reg = build_registry(recs, layout);
  for (int trial = 0; trial < 200; ++trial) {
    std::map<std::size_t, FairnessSpec::ValueCounts> cons;
    for (std::size_t j = 0; j < 3; ++j) {
      if (std::bernoulli_distribution(0.5)(rng) && !(j == 2 && cons.empty())) continue;
      for (int t = 0; t < 4; ++t)
        ++cons[j][static_cast<ValueIndex>(std::uniform_int_distribution<std::size_t>(0, schema.domain_size(j) - 1)(rng))];
    }
    const FairnessSpec spec(cons, 4);
    const QueryMask qm = query_mask(spec, layout);
    std::size_t comparisons = 0;
    const auto got = relevant_partitions(reg, qm, &comparisons);
    EXPECT_EQ(comparisons, reg.size() * qm.query_bitmaps.size());
    std::vector<PartitionBitmap> brute;
    for (auto b : reg.partitions()) {
      const auto dec = decode_partition(b, layout);
      bool ok = true;
      for (const auto& [j, counts] : spec.constraints()) ok &= spec.required(j, *dec[j]) > 0;
      if (ok) brute.push_back(b);
    }
    EXPECT_EQ(got, brute);
  }
}

}  // namespace
}  // namespace fairknn
