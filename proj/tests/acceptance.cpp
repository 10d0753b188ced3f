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

// Acceptance suite: one PASS/FAIL line per criterion.

#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <numbers>
#include <sstream>

#include <unistd.h>

#include "fairknn/experiment.hpp"
#include "test_support.hpp"

#ifndef FAIRKNN_CLI
#error "FAIRKNN_CLI must name the fairknn executable"
#endif

namespace fs = std::filesystem;
using namespace fairknn;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  if (secs >= limit_s) {
    o.pass = false;
    o.detail += "; over the " + detail::format_double(limit_s) + " s budget";
  }
  char head[160];
  std::snprintf(head, sizeof(head), "%s [%d] %s (%.1f s): ", o.pass ? "PASS" : "FAIL", id, name.c_str(), secs);
  std::cout << head << o.detail << std::endl;
  failures += !o.pass;
}

std::string fmt(double x, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", prec, x);
  return buf;
}

// Criterion 1: specialised solvers against exhaustive enumeration.
Outcome solver_exactness() {
  std::mt19937_64 rng(20260101);
  std::array<std::size_t, 3> mismatches{}, feasible{};
  const std::array<std::vector<std::size_t>, 3> domains = {{{3}, {3, 3}, {2, 3, 3}}};
  for (std::size_t m = 1; m <= 3; ++m) {
    for (int trial = 0; trial < 500; ++trial) {
      const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 20)(rng);
      const std::size_t k = std::uniform_int_distribution<std::size_t>(1, std::min<std::size_t>(n, 8))(rng);
      const auto p = testing::random_problem(rng, n, m, domains[m - 1], k);
      const auto truth = oracle_enumerate(p);
      const auto got = m == 1 ? select_1attr(p) : m == 2 ? select_2attr(p) : select_3plus(p);
      const bool same = truth.feasible() == got.feasible() &&
                        (!truth.feasible() || std::abs(truth.total_cost - got.total_cost) <= 1e-9);
      mismatches[m - 1] += !same || !verify(got, p).ok;
      feasible[m - 1] += truth.feasible();
    }
  }
  std::ostringstream d;
  d << "mismatches sort/flow/ilp = " << mismatches[0] << "/" << mismatches[1] << "/" << mismatches[2]
    << " over 500 instances each (feasible " << feasible[0] << "/" << feasible[1] << "/" << feasible[2] << ")";
  return {mismatches == std::array<std::size_t, 3>{}, d.str()};
}

// Criterion 2: flow and branch-and-bound agree on two-attribute instances.
Outcome flow_equals_ilp() {
  std::mt19937_64 rng(20260202);
  std::size_t mismatches = 0, feasible = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(5, 80)(rng);
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, std::min<std::size_t>(n, 20))(rng);
    const auto p = testing::random_problem(rng, n, 2, {4, 6}, k);
    const auto a = select_2attr(p);
    const auto b = select_3plus(p);
    mismatches += a.feasible() != b.feasible() || (a.feasible() && std::abs(a.total_cost - b.total_cost) > 1e-9);
    feasible += a.feasible();
  }
  return {mismatches == 0,
          std::to_string(mismatches) + " cost mismatches over 500 instances (" + std::to_string(feasible) + " feasible)"};
}

// Full-collision run shared by criteria 3 and 4.
struct FullCollisionRun {
  std::size_t queries = 0, successes = 0, violations = 0, truth_feasible = 0, daf_off = 0;
  double max_daf_error = 0.0;
};

const FullCollisionRun& full_collision_run() {
  static const FullCollisionRun run = [] {
    FullCollisionRun out;
    SyntheticOptions so;
    so.n_total = 20000;
    so.dim = 16;
    so.tight_size = 2000;
    so.domains = {2, 3, 2};
    so.seed = 33;
    const Dataset ds = gen_synthetic(so);
    for (const std::vector<std::string>& attrs : {std::vector<std::string>{"0", "1"}, {"0", "1", "2"}}) {
      ExperimentConfig c;
      c.k = 10;
      c.attributes = attrs;
      c.queries = 100;
      c.query_seed = 5 + attrs.size();
      c.lsh.w = 1e12;
      c.lsh.mu = 1;
      c.lsh.ell = 1;
      c.lsh.delta = 0.001;  // surplus 2000 exceeds every partition size
      c.methods = {"pipeline"};
      const auto queries = gen_queries(ds, query_options(c, ds));
      const auto res = run_experiment(ds, queries, c);
      for (const auto& row : res.rows[0]) {
        ++out.queries;
        out.successes += row.success();
        out.violations += row.check.violations.size();
        out.truth_feasible += row.recall_k.has_value();
        if (row.daf) {
          const double err = std::abs(*row.daf - 1.0);
          out.max_daf_error = std::max(out.max_daf_error, err);
          out.daf_off += err > 1e-9;
        } else {
          ++out.daf_off;
        }
      }
    }
    return out;
  }();
  return run;
}

Outcome exact_fairness() {
  const auto& r = full_collision_run();
  return {r.queries == 200 && r.successes == r.queries && r.violations == 0,
          "success " + std::to_string(r.successes) + "/" + std::to_string(r.queries) + ", violations " +
              std::to_string(r.violations)};
}

Outcome daf_exhaustive() {
  const auto& r = full_collision_run();
  std::ostringstream d;
  d << "queries with |DAF-1| > 1e-9: " << r.daf_off << "/" << r.queries << ", max |DAF-1| = " << r.max_daf_error;
  return {r.queries == 200 && r.truth_feasible == r.queries && r.daf_off == 0, d.str()};
}

// Criterion 5: two-cluster data, queries near the tight cluster, derived LSH
// parameters.
Outcome adversarial_recall() {
  ExperimentConfig c;
  c.synthetic.n_total = 10050;
  c.synthetic.dim = 128;
  c.synthetic.tight_size = 50;
  c.synthetic.tight_radius = 1.0;
  c.synthetic.far_offset = 100.0;
  c.synthetic.domains = {2, 3, 2};
  c.synthetic.seed = 5;
  c.k = 10;
  c.attributes = {"0", "1"};
  c.queries = 200;
  c.anchor = QueryAnchor::Center;
  c.plant_pool = 50;
  c.lsh.R = 1.25;
  c.lsh.c = 4.0;
  c.lsh.w = 5.0;
  c.lsh.delta = 0.1;
  c.methods = {"pipeline"};
  const Dataset ds = experiment_dataset(c);
  const auto res = run_experiment(ds, gen_queries(ds, query_options(c, ds)), c);
  const auto& s = res.summaries[0];
  return {s.recall_count == 200 && s.mean_recall_k >= 0.85 && s.mean_recall_1 >= 0.90,
          "recall@10 = " + fmt(s.mean_recall_k) + " (>= 0.85), recall@1 = " + fmt(s.mean_recall_1) +
              " (>= 0.90), success " + fmt(s.success_rate()) + ", mean DAF " + fmt(s.mean_daf)};
}

// Criterion 6: planted matchings with decoys.
Outcome matching_stress() {
  std::ostringstream d;
  bool pass = true;
  for (std::size_t k : {5u, 10u, 20u}) {
    std::size_t ok = 0, max_nodes = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const auto inst = gen_3dm(k, 3 * k, true, 1000 + seed);
      SelectionProblem p{{}, inst.spec};
      for (std::uint32_t row = 0; row < inst.dataset.size(); ++row) {
        const auto& r = inst.dataset.records[row];
        p.candidates.push_back({r.id, row, {}, distance(r.embedding, inst.query, inst.dataset.kind), r.attrs});
      }
      const auto res = select_3plus(p);
      max_nodes = std::max(max_nodes, res.nodes);
      if (!res.feasible() || !verify(res, p).ok) continue;
      std::array<std::set<ValueIndex>, 3> used;
      bool disjoint = true;
      for (RecordId id : res.selected)
        for (std::size_t j = 0; j < 3; ++j) disjoint &= used[j].insert(inst.dataset.records[id].attrs[j]).second;
      ok += disjoint;
    }
    pass &= ok == 50;
    d << "k=" << k << ": " << ok << "/50 (max nodes " << max_nodes << ") ";
  }
  return {pass, d.str()};
}

// Criterion 7: collision statistics of the hash families.
Outcome lsh_statistics() {
  const std::size_t pairs = 10000, d = 16;
  const double R = 1.0, c = 2.0, w = 4.0;
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto unit_vec = [&] { return detail::unit_vector(rng, d); };
  const auto fam = make_hash_family(HashFamilyKind::PStableL2, d, 3, pairs, w, 991);
  std::size_t near_hits = 0, far_hits = 0;
  for (std::size_t i = 0; i < pairs; ++i) {
    const auto x = detail::gaussian_vector(rng, d, 3.0);
    for (int side = 0; side < 2; ++side) {
      const double r = side == 0 ? R * unit(rng) : c * R * (1.0 + unit(rng));
      const auto u = unit_vec();
      std::vector<double> y(x);
      for (std::size_t t = 0; t < d; ++t) y[t] += r * u[t];
      const bool hit = compound_hash(x, fam, i) == compound_hash(y, fam, i);
      (side == 0 ? near_hits : far_hits) += hit;
    }
  }
  const double p1 = static_cast<double>(near_hits) / pairs, p2 = static_cast<double>(far_hits) / pairs;
  const double pooled = (p1 + p2) / 2.0;
  const double z = (p1 - p2) / std::sqrt(pooled * (1.0 - pooled) * 2.0 / pairs);
  const bool separated = z > 2.326;  // one-sided 99%

  const auto ang = make_hash_family(HashFamilyKind::AngularSign, d, 1, pairs, 1.0, 992);
  double worst = 0.0;
  for (double theta : {0.25, 0.75, 1.5, 2.25, 3.0}) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pairs; ++i) {
      auto e = unit_vec(), f = unit_vec();
      const double proj = dot(e, f);
      double n2 = 0.0;
      for (std::size_t t = 0; t < d; ++t) n2 += (f[t] -= proj * e[t]) * f[t];
      std::vector<double> y(d);
      for (std::size_t t = 0; t < d; ++t) y[t] = std::cos(theta) * e[t] + std::sin(theta) * f[t] / std::sqrt(n2);
      hits += compound_hash(e, ang, i) == compound_hash(y, ang, i);
    }
    worst = std::max(worst, std::abs(static_cast<double>(hits) / pairs - (1.0 - theta / std::numbers::pi)));
  }
  return {separated && worst <= 0.02, "near rate " + fmt(p1) + " vs far rate " + fmt(p2) + " (z = " + fmt(z, 1) +
                                          " > 2.326); angular max |rate - (1 - theta/pi)| = " + fmt(worst)};
}

// Criterion 8: 100k points, pipeline against brute force and flow against
// forced branch-and-bound.
Outcome scalability() {
  ExperimentConfig c;
  c.synthetic.n_total = 100000;
  c.synthetic.dim = 32;
  c.synthetic.tight_size = 5000;
  c.synthetic.tight_radius = 1.0;
  c.synthetic.far_offset = 100.0;
  c.synthetic.domains = {2, 3, 2};
  c.synthetic.seed = 8;
  c.attributes = {"0", "1"};
  c.queries = 100;
  c.anchor = QueryAnchor::Center;
  c.plant_pool = 200;
  c.lsh.R = 1.25;
  c.lsh.c = 4.0;
  c.lsh.w = 5.0;
  c.lsh.delta = 0.1;
  c.methods = {"pipeline", "brute"};
  const Dataset ds = experiment_dataset(c);
  std::ostringstream d;
  double pipe20 = 0, brute20 = 0, scanned20 = 1, brute_scanned20 = 0;
  std::vector<Query> queries20;
  for (std::size_t k : {5u, 10u, 20u}) {
    c.k = k;
    const auto queries = gen_queries(ds, query_options(c, ds));
    const auto res = run_experiment(ds, queries, c);
    const auto& p = res.summaries[0];
    const auto& b = res.summaries[1];
    d << "k=" << k << ": pipeline " << fmt(p.mean_total_ms, 3) << " ms, brute " << fmt(b.mean_total_ms, 3)
      << " ms; ";
    if (k == 20) {
      pipe20 = p.mean_total_ms;
      brute20 = b.mean_total_ms;
      scanned20 = p.mean_scanned_fraction;
      brute_scanned20 = b.mean_scanned_fraction;
      queries20 = queries;
    }
  }
  const double speedup = brute20 / pipe20;
  d << "speedup at k=20 " << fmt(speedup, 2) << "x (>= 2); scanned " << fmt(scanned20) << " (< 0.25) vs brute "
    << fmt(brute_scanned20);

  // Same candidate pools through both two-attribute solvers.
  LshParams lsh = c.lsh;
  lsh.K = 20;
  const FairIndex index = build_fair_index(ds, lsh);
  std::vector<SelectionProblem> pools;
  for (const auto& q : queries20) pools.push_back({near_neighbor(q, index, ds).candidates, q.spec});
  auto time_solver = [&](SolverChoice s) {
    double best = 1e300;
    for (int rep = 0; rep < 5; ++rep) {
      const auto t0 = Clock::now();
      double sink = 0.0;
      for (const auto& p : pools) sink += select(p, s).total_cost;
      best = std::min(best, std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
      if (sink < 0) std::cout << "";
    }
    return best;
  };
  const double flow_ms = time_solver(SolverChoice::Flow);
  const double ilp_ms = time_solver(SolverChoice::Ilp);
  d << "; postprocess over " << pools.size() << " pools: flow " << fmt(flow_ms, 3) << " ms, forced ILP "
    << fmt(ilp_ms, 3) << " ms (" << fmt(ilp_ms / flow_ms, 2) << "x, need >= 2)";
  return {speedup >= 2.0 && scanned20 < 0.25 && brute_scanned20 == 1.0 && ilp_ms >= 2.0 * flow_ms, d.str()};
}

// Criterion 9: two CLI bench runs with the same config give identical reports.
Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / ("fairknn_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  {
    std::ofstream cfg(dir / "bench.cfg");
    cfg << "n = 4000\ndim = 8\ntight_size = 400\nk = 6\nattributes = 0,1,2\nqueries = 40\n"
           "methods = pipeline,sair,jir,brute\nR = 0.8\nw = 3\nthreads = 2\n";
  }
  auto run = [&](const std::string& out) {
    const std::string cmd = std::string("\"") + FAIRKNN_CLI + "\" bench --config \"" + (dir / "bench.cfg").string() +
                            "\" --out-dir \"" + (dir / out).string() + "\" > /dev/null";
    return std::system(cmd.c_str());
  };
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  };
  if (run("a") != 0 || run("b") != 0) return {false, "bench command failed"};
  const std::string a = slurp(dir / "a" / "report.ndjson"), b = slurp(dir / "b" / "report.ndjson");
  fs::remove_all(dir);
  return {!a.empty() && a == b, "reports of " + std::to_string(a.size()) + " and " + std::to_string(b.size()) +
                                    " bytes, " + (a == b ? "identical" : "different")};
}

}  // namespace

int main() {
  report(1, "solver exactness vs oracle", 120, solver_exactness);
  report(2, "flow equals ILP on two attributes", 120, flow_equals_ilp);
  report(3, "exact fairness under full collision", 300, exact_fairness);
  report(4, "DAF = 1 under full collision", 300, daf_exhaustive);
  report(5, "two-cluster recall with derived parameters", 600, adversarial_recall);
  report(6, "planted matching stress", 180, matching_stress);
  report(7, "hash family collision statistics", 120, lsh_statistics);
  report(8, "scalability shape at 100k points", 900, scalability);
  report(9, "bench report determinism", 300, determinism);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
