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

// fairknn command-line tool: build, query, bench, gen, verify.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "fairknn/experiment.hpp"
#include "fairknn/index_io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace fairknn;

namespace {

std::vector<double> parse_vector(const std::string& text) {
  std::vector<double> v;
  for (const auto& item : detail::split(text, ','))
    if (auto t = detail::trim(item); !t.empty()) v.push_back(detail::parse_double(t, "--vector"));
  return v;
}

DatasetFormat parse_format(const std::string& s) {
  if (s == "csv") return DatasetFormat::Csv;
  if (s == "binary") return DatasetFormat::Binary;
  throw InputError("unknown format '" + s + "' (expected csv or binary)");
}

void add_lsh_options(CLI::App* cmd, LshParams& p) {
  cmd->add_option("--R", p.R, "near radius");
  cmd->add_option("--c", p.c, "approximation factor");
  cmd->add_option("--w", p.w, "p-stable bucket width");
  cmd->add_option("--delta", p.delta, "failure budget");
  cmd->add_option("--K", p.K, "near points per query used in deriving the table count");
  cmd->add_option("--mu", p.mu, "hashes per table (0 derives it)");
  cmd->add_option("--ell", p.ell, "tables per partition (0 derives it)");
  cmd->add_option("--ell-max", p.ell_max, "cap on derived table counts");
  cmd->add_option("--seed", p.seed, "hash seed");
}

int cmd_build(const std::string& data, const std::string& out, const LshParams& params) {
  const Dataset ds = ingest(data);
  const auto t0 = std::chrono::steady_clock::now();
  const FairIndex index = build_fair_index(ds, params);
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  save_index(index, dataset_fingerprint(ds), out);
  std::size_t entries = 0;
  for (const auto& [b, p] : index.partitions) entries += p.tables.total_entries();
  std::cout << "records     " << ds.size() << "\n"
            << "partitions  " << index.partitions.size() << "\n"
            << "entries     " << entries << "\n"
            << "build_ms    " << ms << "\n";
  if (const auto n = index.clamped_partitions(); n > 0)
    std::cout << "note: table count clamped to ell_max=" << params.ell_max << " in " << n << " partition(s)\n";
  return 0;
}

int cmd_query(const std::string& index_path, const std::string& data, const std::string& spec_text,
              const std::string& vector_text, const std::string& solver, double boost) {
  const Dataset ds = ingest(data);
  const StoredIndex stored = load_index(index_path);
  if (stored.fingerprint != dataset_fingerprint(ds))
    throw InputError("index '" + index_path + "' was not built from '" + data + "'");
  if (!(stored.index.schema == ds.schema)) throw InputError("index schema does not match the dataset");
  Query q{parse_vector(vector_text), parse_spec(spec_text, ds.schema)};
  if (q.vector.size() != ds.dim)
    throw InputError("query vector has " + std::to_string(q.vector.size()) + " components, dataset has " +
                     std::to_string(ds.dim));
  RetrievalOptions opts;
  opts.quota_boost = boost;
  RetrievalReport rep = near_neighbor(q, stored.index, ds, opts);
  SelectionProblem p{rep.candidates, q.spec};
  SolverChoice choice = parse_solver_choice(solver);
  if (choice == SolverChoice::Oracle && p.candidates.size() > kOracleMaxCandidates) choice = SolverChoice::Auto;
  const SelectionResult r = select(p, choice);
  const VerifyReport check = verify(r, p);

  json out;
  out["status"] = to_string(r.status);
  out["solver"] = to_string(r.solver);
  out["selected"] = r.selected;
  out["cost"] = r.feasible() ? json(r.total_cost) : json(nullptr);
  out["candidates"] = rep.candidates.size();
  out["scanned"] = rep.scanned;
  out["relevant_size"] = rep.relevant_size;
  json parts = json::array();
  for (const auto& po : rep.partitions) {
    std::string tuple;
    const auto decoded = decode_partition(po.partition, stored.index.layout);
    for (std::size_t j = 0; j < decoded.size(); ++j)
      tuple += (j ? "|" : "") + ds.schema[j].domain[*decoded[j]];
    parts.push_back(json{{"partition", tuple}, {"size", po.size}, {"quota", po.quota}, {"k_star", po.k_star},
                         {"collisions", po.collisions}, {"achieved", po.achieved}});
  }
  out["partitions"] = parts;
  std::vector<std::string> violations;
  for (const auto& v : check.violations) violations.push_back(describe(v, &ds.schema));
  out["violations"] = violations;
  std::cout << out.dump(2) << "\n";
  if (!r.feasible()) std::cerr << "no fair selection found among the retrieved candidates\n";
  return r.feasible() && check.ok ? 0 : 1;
}

int cmd_bench(const std::string& config_path, const std::string& out_dir, std::size_t threads) {
  ExperimentConfig config = load_config(config_path);
  if (threads > 0) config.threads = threads;
  const Dataset ds = experiment_dataset(config);
  const auto queries = gen_queries(ds, query_options(config, ds));
  const ExperimentResult res = run_experiment(ds, queries, config);
  fs::create_directories(out_dir);
  {
    std::ofstream out(fs::path(out_dir) / "report.ndjson", std::ios::trunc);
    write_report(out, res, ds.schema);
  }
  {
    std::ofstream out(fs::path(out_dir) / "config.txt", std::ios::trunc);
    out << format_config(config);
  }
  std::ostringstream summary;
  write_summary(summary, res);
  {
    std::ofstream out(fs::path(out_dir) / "summary.txt", std::ios::trunc);
    out << summary.str();
  }
  std::cout << summary.str();
  return 0;
}

int cmd_verify(const std::string& data, const std::string& report_path) {
  const Dataset ds = ingest(data);
  std::unordered_map<RecordId, std::size_t> row_of;
  for (std::size_t r = 0; r < ds.size(); ++r) row_of.emplace(ds.records[r].id, r);
  std::ifstream in(report_path);
  if (!in) throw InputError("cannot open '" + report_path + "'");
  std::string line;
  std::size_t lineno = 0, checked = 0, failed = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    json row;
    try {
      row = json::parse(line);
    } catch (const json::exception& e) {
      throw InputError(report_path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (row.at("status") != "feasible") continue;
    const FairnessSpec spec = parse_spec(row.at("spec").get<std::string>(), ds.schema);
    const auto vec = row.at("vector").get<std::vector<double>>();
    SelectionProblem p;
    p.spec = spec;
    SelectionResult r;
    r.status = SelectionStatus::Feasible;
    r.selected = row.at("selected").get<std::vector<RecordId>>();
    r.total_cost = row.at("cost").get<double>();
    for (RecordId id : r.selected) {
      auto it = row_of.find(id);
      if (it == row_of.end()) continue;
      const auto& rec = ds.records[it->second];
      p.candidates.push_back({rec.id, static_cast<std::uint32_t>(it->second), {}, distance(rec.embedding, vec, ds.kind),
                              rec.attrs});
    }
    const VerifyReport rep = verify(r, p);
    ++checked;
    if (!rep.ok) {
      ++failed;
      for (const auto& v : rep.violations)
        std::cout << report_path << ":" << lineno << ": " << describe(v, &ds.schema) << "\n";
    }
  }
  std::cout << checked << " selections checked, " << failed << " with violations\n";
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exact group-fair k-nearest-neighbor search"};
  app.require_subcommand(1);

  std::string data, out, index_path, spec, vec, solver = "auto", config_path, report, format = "csv";
  LshParams lsh;
  double boost = 1.0;
  std::size_t threads = 0;

  auto* build = app.add_subcommand("build", "index a dataset");
  build->add_option("--data", data, "dataset file (csv or packed binary)")->required();
  build->add_option("--out", out, "index file to write")->required();
  add_lsh_options(build, lsh);

  auto* query = app.add_subcommand("query", "run one query against a saved index");
  query->add_option("--index", index_path, "index file")->required();
  query->add_option("--data", data, "dataset the index was built from")->required();
  query->add_option("--spec", spec, "counts, e.g. 'gender:Male=2,Female=3;race:White=1,Hispanic=4'")->required();
  query->add_option("--vector", vec, "comma-separated query vector")->required();
  query->add_option("--solver", solver, "auto, sort, flow, ilp or oracle");
  query->add_option("--quota-boost", boost, "multiplier on per-partition quotas");

  auto* bench = app.add_subcommand("bench", "run an experiment from a config file");
  bench->add_option("--config", config_path, "key = value config file")->required();
  bench->add_option("--out-dir", out, "directory for report.ndjson, summary.txt and config.txt")->required();
  bench->add_option("--threads", threads, "worker threads (overrides config and FAIRKNN_THREADS)");

  auto* verify_cmd = app.add_subcommand("verify", "re-check the selections of a bench report");
  verify_cmd->add_option("--data", data, "dataset the report was produced from")->required();
  verify_cmd->add_option("--report", report, "report.ndjson")->required();

  auto* gen = app.add_subcommand("gen", "generate datasets and workloads");
  gen->require_subcommand(1);

  SyntheticOptions syn;
  std::string distance = "euclidean";
  auto* gen_syn = gen->add_subcommand("synthetic", "two-cluster dataset");
  gen_syn->add_option("--n", syn.n_total, "total points");
  gen_syn->add_option("--dim", syn.dim, "dimension");
  gen_syn->add_option("--tight-size", syn.tight_size, "points in the tight cluster");
  gen_syn->add_option("--tight-radius", syn.tight_radius, "radius of the tight cluster");
  gen_syn->add_option("--far-offset", syn.far_offset, "distance of the far cluster center");
  gen_syn->add_option("--far-spread", syn.far_spread, "typical spread of the far cluster (0: offset/4)");
  gen_syn->add_option("--domains", syn.domains, "attribute domain sizes")->delimiter(',');
  gen_syn->add_option("--correlation", syn.correlation, "chance later attributes copy the first");
  gen_syn->add_option("--seed", syn.seed, "seed");
  gen_syn->add_option("--distance", distance, "distance recorded in the file");
  gen_syn->add_option("--out", out, "output file")->required();
  gen_syn->add_option("--format", format, "csv or binary");

  std::size_t elements = 5, extra = 15;
  bool planted = true;
  std::uint64_t seed = 1;
  std::string spec_out;
  auto* gen_3dm_cmd = gen->add_subcommand("3dm", "matching-hard instance");
  gen_3dm_cmd->add_option("--elements", elements, "elements per set (= k)");
  gen_3dm_cmd->add_option("--extra", extra, "decoy triples");
  gen_3dm_cmd->add_flag("--planted,!--no-planted", planted, "include a perfect matching");
  gen_3dm_cmd->add_option("--seed", seed, "seed");
  gen_3dm_cmd->add_option("--out", out, "output dataset")->required();
  gen_3dm_cmd->add_option("--spec-out", spec_out, "file receiving the spec text");

  QueryOptions qo;
  std::vector<std::string> attrs = {"0", "1"};
  std::string anchor = "data", spec_mode = "planted";
  auto* gen_q = gen->add_subcommand("queries", "feasible query workload as ndjson");
  gen_q->add_option("--data", data, "dataset")->required();
  gen_q->add_option("--k", qo.k, "result size");
  gen_q->add_option("--attributes", attrs, "constrained attributes (names or indices)")->delimiter(',');
  gen_q->add_option("--count", qo.count, "number of queries");
  gen_q->add_option("--anchor", anchor, "data or center");
  gen_q->add_option("--perturbation", qo.perturbation, "expected norm of the offset from the anchor");
  gen_q->add_option("--spec-mode", spec_mode, "planted or random");
  gen_q->add_option("--plant-pool", qo.plant_pool, "plant specs from this many nearest records");
  gen_q->add_option("--seed", qo.seed, "seed");
  gen_q->add_option("--out", out, "output file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*build) return cmd_build(data, out, lsh);
    if (*query) return cmd_query(index_path, data, spec, vec, solver, boost);
    if (*bench) return cmd_bench(config_path, out, threads);
    if (*verify_cmd) return cmd_verify(data, report);
    if (*gen_syn) {
      Dataset ds = gen_synthetic(syn);
      ds.kind = parse_distance_kind(distance);
      export_dataset(ds, out, parse_format(format));
      return 0;
    }
    if (*gen_3dm_cmd) {
      const auto inst = gen_3dm(elements, extra, planted, seed);
      export_dataset(inst.dataset, out, DatasetFormat::Csv);
      const std::string text = format_spec(inst.spec, inst.dataset.schema);
      if (spec_out.empty()) {
        std::cout << text << "\n";
      } else {
        std::ofstream(spec_out, std::ios::trunc) << text << "\n";
      }
      return 0;
    }
    if (*gen_q) {
      const Dataset ds = ingest(data);
      qo.attributes = resolve_attributes(attrs, ds.schema);
      if (anchor == "center") qo.anchor = QueryAnchor::Center;
      else if (anchor != "data") throw InputError("--anchor must be 'data' or 'center'");
      if (spec_mode == "random") qo.spec_mode = SpecMode::Random;
      else if (spec_mode != "planted") throw InputError("--spec-mode must be 'planted' or 'random'");
      std::ofstream o(out, std::ios::trunc);
      if (!o) throw InputError("cannot open '" + out + "' for writing");
      for (const auto& q : gen_queries(ds, qo))
        o << json{{"spec", format_spec(q.spec, ds.schema)}, {"vector", q.vector}}.dump() << "\n";
      return 0;
    }
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ContractViolation& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
