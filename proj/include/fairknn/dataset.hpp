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

// Datasets and their two on-disk formats.
//
// CSV: optional comment lines, then a header `id,attr:<name>...,vec:<d>`,
// then one row per record with the attribute value names followed by d
// numbers. Comment lines may pin metadata:
//
//   # distance=cosine
//   # domain gender=Male|Female|Non-binary
//
// Domains not pinned by a comment are built from values in order of first
// appearance.
//
// Packed binary (little-endian):
//   "FKNNDATA" u32 version u64 n u32 d u32 m u8 metric f64 p
//   m x { str name, u32 |V|, |V| x str value }
//   n x { u64 id, m x u32 value, d x f64 }
// where str is u32 length + bytes.

#pragma once

#include <charconv>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "fairknn/binary_io.hpp"
#include "fairknn/core.hpp"

namespace fairknn {

struct Dataset {
  AttributeSchema schema;
  std::size_t dim = 0;
  DistanceKind kind = DistanceKind::euclidean();
  std::vector<VectorRecord> records;

  [[nodiscard]] std::size_t size() const { return records.size(); }
  [[nodiscard]] bool empty() const { return records.empty(); }
  [[nodiscard]] std::span<const double> embedding(std::size_t row) const { return records[row].embedding; }

  /// Throws InputError on the first broken invariant.
  void validate() const {
    std::unordered_set<RecordId> ids;
    for (std::size_t r = 0; r < records.size(); ++r) {
      const auto& rec = records[r];
      if (rec.embedding.size() != dim)
        throw InputError("record " + std::to_string(rec.id) + " has dimension " +
                         std::to_string(rec.embedding.size()) + ", expected " + std::to_string(dim));
      if (!schema.valid_tuple(rec.attrs))
        throw InputError("record " + std::to_string(rec.id) + " has invalid attribute values");
      if (!ids.insert(rec.id).second) throw InputError("duplicate record id " + std::to_string(rec.id));
    }
  }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    if (!(a.schema == b.schema) || a.dim != b.dim || !(a.kind == b.kind) || a.records.size() != b.records.size())
      return false;
    for (std::size_t r = 0; r < a.records.size(); ++r) {
      const auto& x = a.records[r];
      const auto& y = b.records[r];
      if (x.id != y.id || x.attrs != y.attrs || x.embedding != y.embedding) return false;
    }
    return true;
  }
};

enum class DatasetFormat { Auto, Csv, Binary };

namespace detail {

inline constexpr std::string_view kDatasetMagic = "FKNNDATA";
inline constexpr std::uint32_t kDatasetVersion = 1;

inline std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InputError(where + ": '" + s + "' is not a number");
  }
}

inline std::uint64_t parse_uint(const std::string& s, const std::string& where) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
    throw InputError(where + ": '" + s + "' is not a non-negative integer");
  return v;
}

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

inline Dataset parse_csv(std::istream& in, const std::string& source = "<csv>") {
  std::string line;
  std::size_t line_no = 0;
  DistanceKind kind = DistanceKind::euclidean();
  std::unordered_map<std::string, std::vector<std::string>> pinned;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    if (t[0] == '#') {
      const std::string body = detail::trim(std::string_view(t).substr(1));
      if (body.rfind("distance=", 0) == 0) {
        kind = parse_distance_kind(detail::trim(body.substr(9)));
      } else if (body.rfind("domain ", 0) == 0) {
        const std::string rest = body.substr(7);
        const auto eq = rest.find('=');
        if (eq == std::string::npos)
          throw InputError(source + ":" + std::to_string(line_no) + ": malformed domain comment");
        pinned[detail::trim(rest.substr(0, eq))] = detail::split(rest.substr(eq + 1), '|');
      }
      continue;
    }
    header = detail::split(t, ',');
    break;
  }
  if (header.empty()) throw InputError(source + ": empty dataset file (no header line)");
  const std::string hdr_where = source + ":" + std::to_string(line_no);
  if (header.size() < 2 || detail::trim(header[0]) != "id")
    throw InputError(hdr_where + ": header must start with 'id'");
  std::vector<std::string> attr_names;
  std::size_t dim = 0;
  for (std::size_t c = 1; c < header.size(); ++c) {
    const std::string col = detail::trim(header[c]);
    if (col.rfind("attr:", 0) == 0) {
      attr_names.push_back(col.substr(5));
    } else if (col.rfind("vec:", 0) == 0) {
      if (c + 1 != header.size()) throw InputError(hdr_where + ": 'vec:<d>' must be the last header column");
      dim = detail::parse_uint(col.substr(4), hdr_where);
    } else {
      throw InputError(hdr_where + ": unknown header column '" + col + "'");
    }
  }
  if (dim == 0) throw InputError(hdr_where + ": header needs a 'vec:<d>' column with d >= 1");

  const std::size_t m = attr_names.size();
  std::vector<std::vector<std::string>> domains(m);
  std::vector<std::unordered_map<std::string, ValueIndex>> lookup(m);
  std::vector<bool> fixed(m, false);
  for (std::size_t j = 0; j < m; ++j) {
    if (auto it = pinned.find(attr_names[j]); it != pinned.end()) {
      domains[j] = it->second;
      fixed[j] = true;
      for (std::size_t v = 0; v < domains[j].size(); ++v) lookup[j][domains[j][v]] = static_cast<ValueIndex>(v);
    }
  }

  Dataset ds;
  ds.dim = dim;
  ds.kind = kind;
  const std::size_t ncols = 1 + m + dim;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::string where = source + ":" + std::to_string(line_no);
    auto cols = detail::split(t, ',');
    if (cols.size() != ncols)
      throw InputError(where + ": expected " + std::to_string(ncols) + " columns, found " +
                       std::to_string(cols.size()));
    VectorRecord rec;
    rec.id = detail::parse_uint(detail::trim(cols[0]), where);
    rec.attrs.resize(m);
    for (std::size_t j = 0; j < m; ++j) {
      const std::string value = detail::trim(cols[1 + j]);
      auto it = lookup[j].find(value);
      if (it == lookup[j].end()) {
        if (fixed[j]) throw InputError(where + ": value '" + value + "' not in domain of '" + attr_names[j] + "'");
        it = lookup[j].emplace(value, static_cast<ValueIndex>(domains[j].size())).first;
        domains[j].push_back(value);
      }
      rec.attrs[j] = it->second;
    }
    rec.embedding.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) rec.embedding[i] = detail::parse_double(detail::trim(cols[1 + m + i]), where);
    ds.records.push_back(std::move(rec));
  }
  std::vector<Attribute> attrs;
  for (std::size_t j = 0; j < m; ++j) {
    if (domains[j].empty()) throw InputError(source + ": attribute '" + attr_names[j] + "' has no values");
    attrs.push_back({attr_names[j], domains[j]});
  }
  ds.schema = AttributeSchema(std::move(attrs));
  ds.validate();
  return ds;
}

inline void write_csv(std::ostream& out, const Dataset& ds) {
  out << "# distance=" << to_string(ds.kind) << '\n';
  for (const auto& a : ds.schema.attributes()) {
    out << "# domain " << a.name << '=';
    for (std::size_t v = 0; v < a.domain.size(); ++v) out << (v ? "|" : "") << a.domain[v];
    out << '\n';
  }
  out << "id";
  for (const auto& a : ds.schema.attributes()) out << ",attr:" << a.name;
  out << ",vec:" << ds.dim << '\n';
  for (const auto& rec : ds.records) {
    out << rec.id;
    for (std::size_t j = 0; j < rec.attrs.size(); ++j) out << ',' << ds.schema[j].domain[rec.attrs[j]];
    for (double x : rec.embedding) out << ',' << detail::format_double(x);
    out << '\n';
  }
}

inline std::string encode_binary(const Dataset& ds) {
  io::BinaryWriter w;
  w.bytes(detail::kDatasetMagic);
  w.u32(detail::kDatasetVersion);
  w.u64(ds.records.size());
  w.u32(static_cast<std::uint32_t>(ds.dim));
  w.u32(static_cast<std::uint32_t>(ds.schema.size()));
  w.u8(static_cast<std::uint8_t>(ds.kind.metric));
  w.f64(ds.kind.p);
  for (const auto& a : ds.schema.attributes()) {
    w.str(a.name);
    w.u32(static_cast<std::uint32_t>(a.domain.size()));
    for (const auto& v : a.domain) w.str(v);
  }
  for (const auto& rec : ds.records) {
    w.u64(rec.id);
    for (ValueIndex v : rec.attrs) w.u32(v);
    for (double x : rec.embedding) w.f64(x);
  }
  return w.buffer();
}

inline Dataset decode_binary(io::BinaryReader& r) {
  if (r.bytes(detail::kDatasetMagic.size()) != detail::kDatasetMagic)
    throw InputError("'" + r.source() + "': not a packed dataset file");
  if (const auto version = r.u32(); version != detail::kDatasetVersion)
    throw InputError("'" + r.source() + "': unsupported dataset version " + std::to_string(version));
  Dataset ds;
  const std::uint64_t n = r.u64();
  ds.dim = r.u32();
  const std::uint32_t m = r.u32();
  const auto metric = r.u8();
  if (metric > static_cast<std::uint8_t>(DistanceMetric::Minkowski))
    throw InputError("'" + r.source() + "': unknown distance metric code");
  ds.kind.metric = static_cast<DistanceMetric>(metric);
  ds.kind.p = r.f64();
  std::vector<Attribute> attrs(m);
  for (auto& a : attrs) {
    a.name = r.str();
    a.domain.resize(r.u32());
    for (auto& v : a.domain) v = r.str();
  }
  ds.schema = AttributeSchema(std::move(attrs));
  ds.records.resize(n);
  for (auto& rec : ds.records) {
    rec.id = r.u64();
    rec.attrs.resize(m);
    for (auto& v : rec.attrs) v = r.u32();
    rec.embedding.resize(ds.dim);
    for (auto& x : rec.embedding) x = r.f64();
  }
  if (!r.at_end()) throw InputError("'" + r.source() + "': trailing bytes after dataset records");
  ds.validate();
  return ds;
}

inline Dataset ingest(const std::string& path, DatasetFormat format = DatasetFormat::Auto) {
  if (format == DatasetFormat::Auto) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw InputError("cannot open '" + path + "'");
    char magic[8] = {};
    probe.read(magic, sizeof(magic));
    format = (probe.gcount() == 8 && std::string_view(magic, 8) == detail::kDatasetMagic) ? DatasetFormat::Binary
                                                                                         : DatasetFormat::Csv;
  }
  if (format == DatasetFormat::Binary) {
    auto reader = io::BinaryReader::from_file(path);
    return decode_binary(reader);
  }
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  return parse_csv(in, path);
}

inline void export_dataset(const Dataset& ds, const std::string& path, DatasetFormat format) {
  if (format == DatasetFormat::Binary) {
    io::BinaryWriter w;
    w.bytes(encode_binary(ds));
    w.save(path);
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot open '" + path + "' for writing");
  write_csv(out, ds);
}

/// Text form of a spec: `gender:Male=2,Female=3;race:Hispanic=4,White=1`.
/// k is the per-attribute total.
inline FairnessSpec parse_spec(const std::string& text, const AttributeSchema& schema) {
  std::map<std::size_t, FairnessSpec::ValueCounts> constraints;
  std::optional<std::size_t> k;
  for (const auto& part : detail::split(text, ';')) {
    const std::string p = detail::trim(part);
    if (p.empty()) continue;
    const auto colon = p.find(':');
    if (colon == std::string::npos) throw InputError("spec: expected '<attribute>:<value>=<count>,...' in '" + p + "'");
    const std::size_t j = schema.attribute_index(detail::trim(p.substr(0, colon)));
    if (constraints.contains(j)) throw InputError("spec: attribute '" + schema[j].name + "' listed twice");
    auto& counts = constraints[j];
    std::size_t total = 0;
    for (const auto& item : detail::split(p.substr(colon + 1), ',')) {
      if (detail::trim(item).empty()) continue;
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw InputError("spec: expected '<value>=<count>' in '" + item + "'");
      const ValueIndex v = schema.value_index(j, detail::trim(item.substr(0, eq)));
      const std::size_t c = detail::parse_uint(detail::trim(item.substr(eq + 1)), "spec");
      counts[v] += c;
      total += c;
    }
    if (k && *k != total)
      throw InputError("spec: attribute '" + schema[j].name + "' counts sum to " + std::to_string(total) +
                       ", other attributes sum to " + std::to_string(*k));
    k = total;
  }
  if (!k) throw InputError("spec: no constraints given");
  return FairnessSpec(std::move(constraints), *k);
}

inline std::string format_spec(const FairnessSpec& spec, const AttributeSchema& schema) {
  std::string out;
  for (const auto& [j, counts] : spec.constraints()) {
    if (!out.empty()) out += ';';
    out += schema[j].name + ':';
    bool first = true;
    for (const auto& [v, c] : counts) {
      if (c == 0) continue;
      if (!first) out += ',';
      out += schema[j].domain[v] + '=' + std::to_string(c);
      first = false;
    }
  }
  return out;
}

}  // namespace fairknn
