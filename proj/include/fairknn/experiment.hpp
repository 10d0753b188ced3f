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

// Benchmark runs: configuration, per-query metrics, report and summary.

#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <optional>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "fairknn/baselines.hpp"
#include "fairknn/fair_select.hpp"
#include "fairknn/generators.hpp"

namespace fairknn {

inline const char* to_string(SolverChoice s) {
  switch (s) {
    case SolverChoice::Auto: return "auto";
    case SolverChoice::Sort: return "sort";
    case SolverChoice::Flow: return "flow";
    case SolverChoice::Ilp: return "ilp";
    case SolverChoice::Oracle: return "oracle";
  }
  return "?";
}

inline SolverChoice parse_solver_choice(const std::string& s) {
  if (s == "auto") return SolverChoice::Auto;
  if (s == "sort") return SolverChoice::Sort;
  if (s == "flow") return SolverChoice::Flow;
  if (s == "ilp") return SolverChoice::Ilp;
  if (s == "oracle") return SolverChoice::Oracle;
  throw InputError("unknown solver '" + s + "' (expected auto, sort, flow, ilp or oracle)");
}

/// Methods a bench run can evaluate. `brute` is the ground truth itself.
inline const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> m = {"pipeline", "sair", "jir", "brute"};
  return m;
}

struct ExperimentConfig {
  std::string data;  // dataset path; empty means generate a synthetic one
  SyntheticOptions synthetic;
  std::string distance = "euclidean";  // for generated data

  std::size_t k = 10;
  std::vector<std::string> attributes = {"0", "1"};  // indices or names
  std::size_t queries = 100;
  std::uint64_t query_seed = 7;
  QueryAnchor anchor = QueryAnchor::Data;
  double perturbation = -1.0;  // < 0: tight_radius / 4 for generated data, else 0.25
  SpecMode spec_mode = SpecMode::Planted;
  std::size_t plant_pool = 0;
  std::size_t max_retries = 1000;

  LshParams lsh = [] {
    LshParams p;
    p.K = 0;  // 0 means use k
    return p;
  }();
  SolverChoice solver = SolverChoice::Auto;
  std::size_t ilp_node_budget = IlpOptions{}.node_budget;
  double quota_boost = 1.0;
  std::vector<std::string> methods = {"pipeline"};
  std::size_t threads = 0;  // 0: FAIRKNN_THREADS or 1

  void validate() const {
    auto check = [](bool ok, const char* msg) {
      if (!ok) throw InputError(msg);
    };
    check(k >= 1, "config: k must be at least 1");
    check(queries >= 1, "config: queries must be at least 1");
    check(!attributes.empty(), "config: at least one constrained attribute");
    check(!methods.empty(), "config: at least one method");
    for (const auto& m : methods)
      if (std::find(known_methods().begin(), known_methods().end(), m) == known_methods().end())
        throw InputError("config: unknown method '" + m + "'");
  }
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  for (const auto& item : split(s, ','))
    if (auto t = trim(item); !t.empty()) out.push_back(t);
  return out;
}

inline std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : ",") + s;
  return out;
}

inline std::size_t to_size(const std::string& v, const std::string& where) {
  return static_cast<std::size_t>(parse_uint(v, where));
}

inline bool all_digits(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

}  // namespace detail

/// Flat `key = value` text, one per line, `#` comments. Unknown keys are errors.
inline ExperimentConfig parse_config(std::istream& in, const std::string& source = "<config>") {
  using namespace detail;
  ExperimentConfig c;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"data", [&](auto& v, auto&) { c.data = v; }},
      {"distance", [&](auto& v, auto&) { c.distance = to_string(parse_distance_kind(v)); }},
      {"n", [&](auto& v, auto& w) { c.synthetic.n_total = to_size(v, w); }},
      {"dim", [&](auto& v, auto& w) { c.synthetic.dim = to_size(v, w); }},
      {"tight_size", [&](auto& v, auto& w) { c.synthetic.tight_size = to_size(v, w); }},
      {"tight_radius", [&](auto& v, auto& w) { c.synthetic.tight_radius = parse_double(v, w); }},
      {"far_offset", [&](auto& v, auto& w) { c.synthetic.far_offset = parse_double(v, w); }},
      {"far_spread", [&](auto& v, auto& w) { c.synthetic.far_spread = parse_double(v, w); }},
      {"domains",
       [&](auto& v, auto& w) {
         c.synthetic.domains.clear();
         for (const auto& d : split_list(v)) c.synthetic.domains.push_back(to_size(d, w));
       }},
      {"correlation", [&](auto& v, auto& w) { c.synthetic.correlation = parse_double(v, w); }},
      {"data_seed", [&](auto& v, auto& w) { c.synthetic.seed = parse_uint(v, w); }},
      {"k", [&](auto& v, auto& w) { c.k = to_size(v, w); }},
      {"attributes", [&](auto& v, auto&) { c.attributes = split_list(v); }},
      {"queries", [&](auto& v, auto& w) { c.queries = to_size(v, w); }},
      {"query_seed", [&](auto& v, auto& w) { c.query_seed = parse_uint(v, w); }},
      {"anchor",
       [&](auto& v, auto& w) {
         if (v == "data") c.anchor = QueryAnchor::Data;
         else if (v == "center") c.anchor = QueryAnchor::Center;
         else throw InputError(w + ": anchor must be 'data' or 'center'");
       }},
      {"perturbation", [&](auto& v, auto& w) { c.perturbation = parse_double(v, w); }},
      {"spec_mode",
       [&](auto& v, auto& w) {
         if (v == "planted") c.spec_mode = SpecMode::Planted;
         else if (v == "random") c.spec_mode = SpecMode::Random;
         else throw InputError(w + ": spec_mode must be 'planted' or 'random'");
       }},
      {"plant_pool", [&](auto& v, auto& w) { c.plant_pool = to_size(v, w); }},
      {"max_retries", [&](auto& v, auto& w) { c.max_retries = to_size(v, w); }},
      {"R", [&](auto& v, auto& w) { c.lsh.R = parse_double(v, w); }},
      {"c", [&](auto& v, auto& w) { c.lsh.c = parse_double(v, w); }},
      {"w", [&](auto& v, auto& w) { c.lsh.w = parse_double(v, w); }},
      {"delta", [&](auto& v, auto& w) { c.lsh.delta = parse_double(v, w); }},
      {"K", [&](auto& v, auto& w) { c.lsh.K = to_size(v, w); }},
      {"mu", [&](auto& v, auto& w) { c.lsh.mu = to_size(v, w); }},
      {"ell", [&](auto& v, auto& w) { c.lsh.ell = to_size(v, w); }},
      {"ell_max", [&](auto& v, auto& w) { c.lsh.ell_max = to_size(v, w); }},
      {"lsh_seed", [&](auto& v, auto& w) { c.lsh.seed = parse_uint(v, w); }},
      {"solver", [&](auto& v, auto&) { c.solver = parse_solver_choice(v); }},
      {"ilp_node_budget", [&](auto& v, auto& w) { c.ilp_node_budget = to_size(v, w); }},
      {"quota_boost", [&](auto& v, auto& w) { c.quota_boost = parse_double(v, w); }},
      {"methods", [&](auto& v, auto&) { c.methods = split_list(v); }},
      {"threads", [&](auto& v, auto& w) { c.threads = to_size(v, w); }},
  };
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = source + ":" + std::to_string(lineno);
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw InputError(where + ": expected 'key = value'");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    auto it = setters.find(key);
    if (it == setters.end()) throw InputError(where + ": unknown key '" + key + "'");
    it->second(value, where);
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  return parse_config(in, path);
}

/// Canonical text of a config; parse_config reads it back unchanged.
inline std::string format_config(const ExperimentConfig& c) {
  using detail::format_double;
  std::vector<std::string> domains;
  for (auto d : c.synthetic.domains) domains.push_back(std::to_string(d));
  std::ostringstream o;
  if (!c.data.empty()) o << "data = " << c.data << '\n';
  o << "distance = " << c.distance << '\n'
    << "n = " << c.synthetic.n_total << '\n'
    << "dim = " << c.synthetic.dim << '\n'
    << "tight_size = " << c.synthetic.tight_size << '\n'
    << "tight_radius = " << format_double(c.synthetic.tight_radius) << '\n'
    << "far_offset = " << format_double(c.synthetic.far_offset) << '\n'
    << "far_spread = " << format_double(c.synthetic.far_spread) << '\n'
    << "domains = " << detail::join(domains) << '\n'
    << "correlation = " << format_double(c.synthetic.correlation) << '\n'
    << "data_seed = " << c.synthetic.seed << '\n'
    << "k = " << c.k << '\n'
    << "attributes = " << detail::join(c.attributes) << '\n'
    << "queries = " << c.queries << '\n'
    << "query_seed = " << c.query_seed << '\n'
    << "anchor = " << (c.anchor == QueryAnchor::Data ? "data" : "center") << '\n'
    << "perturbation = " << format_double(c.perturbation) << '\n'
    << "spec_mode = " << (c.spec_mode == SpecMode::Planted ? "planted" : "random") << '\n'
    << "plant_pool = " << c.plant_pool << '\n'
    << "max_retries = " << c.max_retries << '\n'
    << "R = " << format_double(c.lsh.R) << '\n'
    << "c = " << format_double(c.lsh.c) << '\n'
    << "w = " << format_double(c.lsh.w) << '\n'
    << "delta = " << format_double(c.lsh.delta) << '\n'
    << "K = " << c.lsh.K << '\n'
    << "mu = " << c.lsh.mu << '\n'
    << "ell = " << c.lsh.ell << '\n'
    << "ell_max = " << c.lsh.ell_max << '\n'
    << "lsh_seed = " << c.lsh.seed << '\n'
    << "solver = " << to_string(c.solver) << '\n'
    << "ilp_node_budget = " << c.ilp_node_budget << '\n'
    << "quota_boost = " << format_double(c.quota_boost) << '\n'
    << "methods = " << detail::join(c.methods) << '\n'
    << "threads = " << c.threads << '\n';
  return o.str();
}

/// The dataset a config describes: loaded from `data`, or generated.
inline Dataset experiment_dataset(const ExperimentConfig& c) {
  if (!c.data.empty()) return ingest(c.data);
  Dataset ds = gen_synthetic(c.synthetic);
  ds.kind = parse_distance_kind(c.distance);
  return ds;
}

inline std::vector<std::size_t> resolve_attributes(const std::vector<std::string>& names, const AttributeSchema& s) {
  std::vector<std::size_t> out;
  for (const auto& n : names) {
    const std::size_t j = detail::all_digits(n) ? detail::to_size(n, "attributes") : s.attribute_index(n);
    if (j >= s.size()) throw InputError("attribute index " + n + " out of range");
    out.push_back(j);
  }
  return out;
}

inline QueryOptions query_options(const ExperimentConfig& c, const Dataset& ds) {
  QueryOptions q;
  q.count = c.queries;
  q.k = c.k;
  q.attributes = resolve_attributes(c.attributes, ds.schema);
  q.anchor = c.anchor;
  q.perturbation = c.perturbation >= 0.0          ? c.perturbation
                   : c.data.empty()               ? c.synthetic.tight_radius / 4.0
                                                  : 0.25;
  q.spec_mode = c.spec_mode;
  q.plant_pool = c.plant_pool;
  q.max_retries = c.max_retries;
  q.seed = c.query_seed;
  return q;
}

inline std::size_t worker_threads(std::size_t configured) {
  if (configured > 0) return configured;
  if (const char* env = std::getenv("FAIRKNN_THREADS")) {
    try {
      const auto n = detail::parse_uint(env, "FAIRKNN_THREADS");
      if (n > 0) return static_cast<std::size_t>(n);
    } catch (const InputError&) {
    }
  }
  return 1;
}

/// Per-query outcome of one method.
struct QueryRow {
  std::string method;
  std::size_t query = 0;
  SelectionResult result;
  VerifyReport check;
  std::size_t candidates = 0;
  std::size_t scanned = 0;
  std::size_t relevant_size = 0;
  std::optional<double> daf;
  std::optional<double> recall_k;
  std::optional<double> recall_1;
  double search_ms = 0.0;
  double post_ms = 0.0;
  double total_ms = 0.0;

  [[nodiscard]] bool success() const { return result.feasible() && check.ok; }
  [[nodiscard]] double scanned_fraction() const {
    return relevant_size == 0 ? 0.0 : static_cast<double>(scanned) / static_cast<double>(relevant_size);
  }
};

struct MethodSummary {
  std::string method;
  std::size_t queries = 0;
  std::size_t successes = 0;
  std::size_t violations = 0;
  std::size_t daf_count = 0;
  double mean_daf = 0.0;
  double max_daf = 0.0;
  std::size_t recall_count = 0;
  double mean_recall_k = 0.0;
  double mean_recall_1 = 0.0;
  double mean_scanned_fraction = 0.0;
  double build_ms = 0.0;
  double mean_search_ms = 0.0;
  double mean_post_ms = 0.0;
  double mean_total_ms = 0.0;

  [[nodiscard]] double success_rate() const {
    return queries == 0 ? 0.0 : static_cast<double>(successes) / static_cast<double>(queries);
  }
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<Query> queries;
  std::vector<std::string> methods;     // report order
  std::vector<std::vector<QueryRow>> rows;  // [method][query]
  std::vector<MethodSummary> summaries;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

/// Fraction of the reference set found in the result; both are id lists.
inline double overlap(const std::vector<RecordId>& result, const std::vector<RecordId>& reference, std::size_t k) {
  if (k == 0) return 1.0;
  std::size_t hit = 0;
  const std::size_t n = std::min(k, reference.size());
  for (std::size_t i = 0; i < n; ++i)
    if (std::find(result.begin(), result.begin() + static_cast<std::ptrdiff_t>(std::min(k, result.size())),
                  reference[i]) != result.begin() + static_cast<std::ptrdiff_t>(std::min(k, result.size())))
      ++hit;
  return static_cast<double>(hit) / static_cast<double>(k);
}

inline void score(QueryRow& row, const QueryRow& truth, std::size_t k) {
  if (!truth.result.feasible()) return;
  row.recall_k = row.result.feasible() ? overlap(row.result.selected, truth.result.selected, k) : 0.0;
  row.recall_1 = row.result.feasible() ? overlap(row.result.selected, truth.result.selected, 1) : 0.0;
  if (!row.result.feasible()) return;
  const double gt = truth.result.total_cost;
  row.daf = gt > 0.0 ? row.result.total_cost / gt : (row.result.total_cost == 0.0 ? 1.0 : HUGE_VAL);
}

}  // namespace detail

/// Runs every configured method on every query. Ground truth is exhaustive
/// retrieval over the relevant partitions plus exact selection, computed once
/// per query and reported as method `brute` when requested.
inline ExperimentResult run_experiment(const Dataset& ds, const std::vector<Query>& queries,
                                       const ExperimentConfig& config) {
  config.validate();
  using detail::Clock;
  ExperimentResult res;
  res.config = config;
  res.queries = queries;
  res.methods = config.methods;
  const std::size_t nq = queries.size();
  const std::size_t nm = res.methods.size();
  LshParams lsh = config.lsh;
  if (lsh.K == 0) lsh.K = config.k;
  IlpOptions ilp;
  ilp.node_budget = config.ilp_node_budget;

  auto has = [&](const std::string& m) { return std::find(res.methods.begin(), res.methods.end(), m) != res.methods.end(); };
  std::map<std::string, double> build_ms;
  const BitLayout layout(ds.schema);
  auto t0 = Clock::now();
  const PartitionRegistry registry = build_registry(ds.records, layout);
  build_ms["brute"] = detail::ms_since(t0);
  std::optional<FairIndex> index;
  if (has("pipeline") || has("jir")) {
    t0 = Clock::now();
    index = build_fair_index(ds, lsh);
    build_ms["pipeline"] = build_ms["jir"] = detail::ms_since(t0);
  }
  std::optional<SairIndex> sair;
  if (has("sair")) {
    t0 = Clock::now();
    sair = build_sair_index(ds, lsh);
    build_ms["sair"] = detail::ms_since(t0);
  }
  const auto proportions = marginal_proportions(ds);

  auto solve = [&](QueryRow& row, RetrievalReport&& rep, const Query& q, SolverChoice choice,
                   Clock::time_point start, double search_ms) {
    row.search_ms = search_ms;
    row.candidates = rep.candidates.size();
    row.scanned = rep.scanned;
    row.relevant_size = rep.relevant_size;
    const auto t = Clock::now();
    SelectionProblem p{std::move(rep.candidates), q.spec};
    if (choice == SolverChoice::Oracle && p.candidates.size() > kOracleMaxCandidates) choice = SolverChoice::Auto;
    row.result = select(p, choice, ilp);
    row.post_ms = detail::ms_since(t);
    row.check = verify(row.result, p);
    row.total_ms = detail::ms_since(start);
  };

  res.rows.assign(nm, std::vector<QueryRow>(nq));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t qi = next++; qi < nq; qi = next++) {
      const Query& q = queries[qi];
      QueryRow truth;
      truth.method = "brute";
      truth.query = qi;
      {
        const auto start = Clock::now();
        auto rep = exhaustive_retrieval(q, registry, ds);
        solve(truth, std::move(rep), q, SolverChoice::Auto, start, detail::ms_since(start));
      }
      for (std::size_t mi = 0; mi < nm; ++mi) {
        const std::string& m = res.methods[mi];
        QueryRow row;
        if (m == "brute") {
          row = truth;
        } else {
          row.method = m;
          row.query = qi;
          const auto start = Clock::now();
          RetrievalReport rep;
          if (m == "pipeline") {
            RetrievalOptions opts;
            opts.quota_boost = config.quota_boost;
            rep = near_neighbor(q, *index, ds, opts);
          } else if (m == "jir") {
            rep = jir_retrieve(q, *index, ds, proportions);
          } else {
            rep = sair_retrieve(q, *sair, ds);
          }
          solve(row, std::move(rep), q, config.solver, start, detail::ms_since(start));
        }
        detail::score(row, truth, q.spec.k());
        res.rows[mi][qi] = std::move(row);
      }
    }
  };
  const std::size_t nt = std::min(worker_threads(config.threads), std::max<std::size_t>(1, nq));
  if (nt <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < nt; ++t) pool.emplace_back(worker);
  }

  for (std::size_t mi = 0; mi < nm; ++mi) {
    MethodSummary s;
    s.method = res.methods[mi];
    s.build_ms = build_ms[s.method];
    for (const auto& row : res.rows[mi]) {
      ++s.queries;
      s.successes += row.success();
      s.violations += row.check.violations.size();
      if (row.daf) {
        ++s.daf_count;
        s.mean_daf += *row.daf;
        s.max_daf = std::max(s.max_daf, *row.daf);
      }
      if (row.recall_k) {
        ++s.recall_count;
        s.mean_recall_k += *row.recall_k;
        s.mean_recall_1 += *row.recall_1;
      }
      s.mean_scanned_fraction += row.scanned_fraction();
      s.mean_search_ms += row.search_ms;
      s.mean_post_ms += row.post_ms;
      s.mean_total_ms += row.total_ms;
    }
    if (s.daf_count) s.mean_daf /= static_cast<double>(s.daf_count);
    if (s.recall_count) {
      s.mean_recall_k /= static_cast<double>(s.recall_count);
      s.mean_recall_1 /= static_cast<double>(s.recall_count);
    }
    if (s.queries) {
      const double n = static_cast<double>(s.queries);
      s.mean_scanned_fraction /= n;
      s.mean_search_ms /= n;
      s.mean_post_ms /= n;
      s.mean_total_ms /= n;
    }
    res.summaries.push_back(s);
  }
  return res;
}

/// One JSON object per (method, query), methods in config order. Timings
/// are left out so that equal inputs give equal bytes.
inline void write_report(std::ostream& out, const ExperimentResult& res, const AttributeSchema& schema) {
  auto opt = [](const std::optional<double>& v) {
    return v && std::isfinite(*v) ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  for (std::size_t mi = 0; mi < res.methods.size(); ++mi) {
    for (const auto& row : res.rows[mi]) {
      const Query& q = res.queries[row.query];
      nlohmann::ordered_json j;
      j["method"] = row.method;
      j["query"] = row.query;
      j["spec"] = format_spec(q.spec, schema);
      j["k"] = q.spec.k();
      j["status"] = to_string(row.result.status);
      j["solver"] = to_string(row.result.solver);
      j["selected"] = row.result.selected;
      j["cost"] = row.result.feasible() ? nlohmann::ordered_json(row.result.total_cost) : nlohmann::ordered_json(nullptr);
      j["success"] = row.success();
      j["daf"] = opt(row.daf);
      j["recall_at_k"] = opt(row.recall_k);
      j["recall_at_1"] = opt(row.recall_1);
      j["candidates"] = row.candidates;
      j["scanned"] = row.scanned;
      j["relevant_size"] = row.relevant_size;
      j["nodes"] = row.result.nodes;
      std::vector<std::string> violations;
      for (const auto& v : row.check.violations) violations.push_back(describe(v, &schema));
      j["violations"] = violations;
      j["vector"] = q.vector;
      out << j.dump() << '\n';
    }
  }
}

inline void write_summary(std::ostream& out, const ExperimentResult& res) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%-9s %7s %8s %8s %8s %9s %9s %9s %10s %10s %10s %10s\n", "method", "queries",
                "success", "meanDAF", "maxDAF", "recall@k", "recall@1", "scanned", "build_ms", "search_ms",
                "post_ms", "total_ms");
  out << buf;
  for (const auto& s : res.summaries) {
    std::snprintf(buf, sizeof(buf), "%-9s %7zu %8.4f %8.4f %8.4f %9.4f %9.4f %9.4f %10.2f %10.4f %10.4f %10.4f\n",
                  s.method.c_str(), s.queries, s.success_rate(), s.mean_daf, s.max_daf, s.mean_recall_k,
                  s.mean_recall_1, s.mean_scanned_fraction, s.build_ms, s.mean_search_ms, s.mean_post_ms,
                  s.mean_total_ms);
    out << buf;
  }
  for (const auto& s : res.summaries)
    if (s.violations > 0) out << s.method << ": " << s.violations << " fairness violations\n";
}

}  // namespace fairknn
