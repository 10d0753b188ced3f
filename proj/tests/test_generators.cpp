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

#include <set>

#include "fairknn/baselines.hpp"
#include "fairknn/generators.hpp"
#include "test_support.hpp"

namespace fairknn {
namespace {

using testing::drivers_dataset;

double norm(std::span<const double> x) { return std::sqrt(dot(x, x)); }

SyntheticOptions small_synthetic() {
  SyntheticOptions o;
  o.n_total = 1000;
  o.dim = 8;
  o.tight_size = 100;
  o.tight_radius = 1.0;
  o.far_offset = 50.0;
  return o;
}

TEST(Synthetic, TwoClusters) {
  const Dataset ds = gen_synthetic(small_synthetic());
  ASSERT_EQ(ds.size(), 1000u);
  EXPECT_EQ(ds.dim, 8u);
  EXPECT_EQ(ds.schema.size(), 3u);
  std::size_t tight = 0;
  for (const auto& r : ds.records) {
    const double d = norm(r.embedding);
    if (d <= 1.0) {
      ++tight;
    } else {
      EXPECT_GT(d, 10.0);
    }
  }
  EXPECT_EQ(tight, 100u);
}

TEST(Synthetic, SeedDeterminesTheData) {
  const Dataset a = gen_synthetic(small_synthetic());
  const Dataset b = gen_synthetic(small_synthetic());
  EXPECT_EQ(encode_binary(a), encode_binary(b));
  auto o = small_synthetic();
  o.seed = 2;
  EXPECT_NE(encode_binary(gen_synthetic(o)), encode_binary(a));
}

TEST(Synthetic, FullCorrelationCopiesTheFirstAttribute) {
  auto o = small_synthetic();
  o.correlation = 1.0;
  for (const auto& r : gen_synthetic(o).records) {
    EXPECT_EQ(r.attrs[1], r.attrs[0] % 3);
    EXPECT_EQ(r.attrs[2], r.attrs[0] % 2);
  }
}

TEST(CountFeasible, Drivers) {
  const Dataset ds = drivers_dataset();
  // Only two Non-binary drivers exist.
  EXPECT_FALSE(count_feasible(ds, FairnessSpec({{0, {{0, 1}, {1, 1}, {2, 3}}}}, 5)));
  EXPECT_TRUE(count_feasible(ds, FairnessSpec({{0, {{0, 2}, {1, 1}, {2, 2}}}}, 5)));
  // Non-binary drivers are Hispanic or White; none are Black.
  EXPECT_FALSE(count_feasible(ds, FairnessSpec({{0, {{2, 1}}}, {1, {{1, 1}}}}, 1)));
  EXPECT_FALSE(count_feasible(ds, FairnessSpec({{0, {{0, 11}}}}, 11)));
}

TEST(ThreeDm, PlantedInstancesHaveAPerfectMatching) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto inst = gen_3dm(6, 18, true, seed);
    ASSERT_EQ(inst.dataset.size(), 24u);
    EXPECT_EQ(inst.spec.k(), 6u);
    // The first k triples are the planted matching.
    for (std::size_t j = 0; j < 3; ++j) {
      std::set<ValueIndex> seen;
      for (std::size_t r = 0; r < 6; ++r) seen.insert(inst.dataset.records[r].attrs[j]);
      EXPECT_EQ(seen.size(), 6u);
    }
    EXPECT_TRUE(count_feasible(inst.dataset, inst.spec));
  }
}

TEST(ThreeDm, WithoutPlantingASmallInstanceCanBeInfeasible) {
  // Three triples over three elements per side cannot all be disjoint when
  // two share an X value.
  bool saw_infeasible = false;
  for (std::uint64_t seed = 0; seed < 50 && !saw_infeasible; ++seed) {
    const auto inst = gen_3dm(3, 3, false, seed);
    SelectionProblem p{{}, inst.spec};
    for (std::uint32_t row = 0; row < inst.dataset.size(); ++row)
      p.candidates.push_back({row, row, {}, 1.0, inst.dataset.records[row].attrs});
    saw_infeasible = !select_3plus(p).feasible();
  }
  EXPECT_TRUE(saw_infeasible);
}

TEST(Queries, PlantedSpecsAreFeasible) {
  const Dataset ds = gen_synthetic(small_synthetic());
  QueryOptions qo;
  qo.count = 50;
  qo.k = 7;
  qo.attributes = {0, 1, 2};
  const auto queries = gen_queries(ds, qo);
  ASSERT_EQ(queries.size(), 50u);
  const auto registry = build_registry(ds.records, BitLayout(ds.schema));
  for (const auto& q : queries) {
    EXPECT_EQ(q.spec.k(), 7u);
    EXPECT_EQ(q.spec.num_constrained(), 3u);
    SelectionProblem p{exhaustive_retrieval(q, registry, ds).candidates, q.spec};
    EXPECT_TRUE(select(p).feasible());
  }
}

TEST(Queries, CenterAnchorAndPlantPool) {
  const Dataset ds = gen_synthetic(small_synthetic());
  QueryOptions qo;
  qo.count = 20;
  qo.k = 5;
  qo.anchor = QueryAnchor::Center;
  qo.perturbation = 0.1;
  qo.plant_pool = 100;
  for (const auto& q : gen_queries(ds, qo)) EXPECT_LT(norm(q.vector), 0.5);
}

TEST(Queries, RandomSpecsPassTheCountCheck) {
  const Dataset ds = gen_synthetic(small_synthetic());
  QueryOptions qo;
  qo.count = 30;
  qo.k = 6;
  qo.spec_mode = SpecMode::Random;
  for (const auto& q : gen_queries(ds, qo)) EXPECT_TRUE(count_feasible(ds, q.spec));
}

TEST(Queries, GivesUpAfterMaxRetries) {
  const Dataset ds = drivers_dataset();
  QueryOptions qo;
  qo.count = 1;
  qo.k = 9;
  qo.attributes = {0, 1};
  qo.spec_mode = SpecMode::Random;
  qo.max_retries = 5;
  EXPECT_THROW(gen_queries(ds, qo), InputError);
  qo.spec_mode = SpecMode::Planted;
  qo.k = 11;
  EXPECT_THROW(gen_queries(ds, qo), InputError);
}

TEST(Jir, QuotaIsTheCeilingOfTheProportionProduct) {
  EXPECT_EQ(jir_quota(10, {0.5, 0.4}), 2u);
  EXPECT_EQ(jir_quota(10, {0.5, 0.45}), 3u);
  EXPECT_EQ(jir_quota(7, {1.0}), 7u);
  EXPECT_EQ(jir_quota(5, {0.0, 0.3}), 0u);
}

TEST(Jir, MarginalProportionsOfDrivers) {
  const auto prop = marginal_proportions(drivers_dataset());
  ASSERT_EQ(prop.size(), 3u);
  EXPECT_DOUBLE_EQ(prop[0][0], 0.4);
  EXPECT_DOUBLE_EQ(prop[0][1], 0.4);
  EXPECT_DOUBLE_EQ(prop[0][2], 0.2);
  EXPECT_DOUBLE_EQ(prop[1][0], 0.3);
  EXPECT_DOUBLE_EQ(prop[2][1], 0.4);
}

LshParams full_collision() {
  LshParams p;
  p.w = 1e12;
  p.mu = 1;
  p.ell = 1;
  p.delta = 0.001;
  return p;
}

TEST(Sair, SingleAttributeMatchesSortSelection) {
  const Dataset ds = gen_synthetic(small_synthetic());
  const auto index = build_sair_index(ds, full_collision());
  QueryOptions qo;
  qo.count = 30;
  qo.k = 8;
  qo.attributes = {1};
  const auto registry = build_registry(ds.records, BitLayout(ds.schema));
  for (const auto& q : gen_queries(ds, qo)) {
    const auto got = select(SelectionProblem{sair_retrieve(q, index, ds).candidates, q.spec});
    const auto want = select_1attr(SelectionProblem{exhaustive_retrieval(q, registry, ds).candidates, q.spec});
    ASSERT_TRUE(got.feasible());
    EXPECT_EQ(got.selected, want.selected);
    EXPECT_NEAR(got.total_cost, want.total_cost, 1e-9);
  }
}

TEST(Sair, KeepsOnlyRecordsFoundUnderEveryAttribute) {
  const Dataset ds = drivers_dataset();
  const auto index = build_sair_index(ds, full_collision());
  // Two nearest per value: Female {2, 4}, Black {2, 7}, White {1, 6}. Only
  // record 2 is found under both attributes, so the pool is too thin.
  const Query q{{0.0, 0.0}, FairnessSpec({{0, {{1, 2}}}, {1, {{0, 1}, {1, 1}}}}, 2)};
  const auto r = sair_retrieve(q, index, ds);
  ASSERT_EQ(r.candidates.size(), 1u);
  EXPECT_EQ(r.candidates[0].id, 2u);
  EXPECT_FALSE(select(SelectionProblem{r.candidates, q.spec}).feasible());
}

TEST(Jir, FullCollisionPoolsAreSelectable) {
  const Dataset ds = gen_synthetic(small_synthetic());
  const auto index = build_fair_index(ds, full_collision());
  const auto prop = marginal_proportions(ds);
  QueryOptions qo;
  qo.count = 20;
  qo.k = 10;
  for (const auto& q : gen_queries(ds, qo)) {
    const auto r = jir_retrieve(q, index, ds, prop);
    for (const auto& po : r.partitions) EXPECT_LE(po.achieved, po.quota);
  }
}

}  // namespace
}  // namespace fairknn
