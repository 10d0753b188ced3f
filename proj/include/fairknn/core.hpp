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
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace fairknn {

using RecordId = std::uint64_t;
using ValueIndex = std::uint32_t;

/// Thrown when a caller breaks a documented precondition.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Thrown for bad input data (files, malformed encodings, bad configs).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractViolation(what);
}

struct VectorRecord {
  RecordId id = 0;
  std::vector<double> embedding;
  std::vector<ValueIndex> attrs;
};

struct Attribute {
  std::string name;
  std::vector<std::string> domain;
};

/// Ordered protected attributes and their value domains. Values are referred
/// to by index everywhere except at the I/O boundary.
class AttributeSchema {
 public:
  AttributeSchema() = default;
  explicit AttributeSchema(std::vector<Attribute> attributes) : attributes_(std::move(attributes)) {
    std::unordered_set<std::string> names;
    for (const auto& a : attributes_) {
      require(!a.domain.empty(), "attribute '" + a.name + "' has an empty domain");
      require(names.insert(a.name).second, "duplicate attribute name '" + a.name + "'");
      std::unordered_set<std::string> values(a.domain.begin(), a.domain.end());
      require(values.size() == a.domain.size(), "duplicate value in domain of '" + a.name + "'");
    }
  }

  [[nodiscard]] std::size_t size() const { return attributes_.size(); }
  [[nodiscard]] const Attribute& operator[](std::size_t j) const { return attributes_.at(j); }
  [[nodiscard]] const std::vector<Attribute>& attributes() const { return attributes_; }
  [[nodiscard]] std::size_t domain_size(std::size_t j) const { return attributes_.at(j).domain.size(); }

  [[nodiscard]] std::size_t attribute_index(const std::string& name) const {
    for (std::size_t j = 0; j < attributes_.size(); ++j)
      if (attributes_[j].name == name) return j;
    throw InputError("unknown attribute '" + name + "'");
  }

  [[nodiscard]] ValueIndex value_index(std::size_t j, const std::string& value) const {
    const auto& dom = attributes_.at(j).domain;
    for (std::size_t v = 0; v < dom.size(); ++v)
      if (dom[v] == value) return static_cast<ValueIndex>(v);
    throw InputError("unknown value '" + value + "' for attribute '" + attributes_[j].name + "'");
  }

  [[nodiscard]] bool valid_tuple(std::span<const ValueIndex> attrs) const {
    if (attrs.size() != attributes_.size()) return false;
    for (std::size_t j = 0; j < attrs.size(); ++j)
      if (attrs[j] >= attributes_[j].domain.size()) return false;
    return true;
  }

  friend bool operator==(const AttributeSchema& a, const AttributeSchema& b) {
    if (a.attributes_.size() != b.attributes_.size()) return false;
    for (std::size_t j = 0; j < a.attributes_.size(); ++j)
      if (a.attributes_[j].name != b.attributes_[j].name || a.attributes_[j].domain != b.attributes_[j].domain)
        return false;
    return true;
  }

 private:
  std::vector<Attribute> attributes_;
};

/// Per-attribute, per-value required counts. Values absent from an
/// attribute's map have a required count of zero.
class FairnessSpec {
 public:
  using ValueCounts = std::map<ValueIndex, std::size_t>;

  FairnessSpec() = default;
  FairnessSpec(std::map<std::size_t, ValueCounts> constraints, std::size_t k)
      : constraints_(std::move(constraints)), k_(k) {
    require(!constraints_.empty(), "fairness spec must constrain at least one attribute");
    for (const auto& [j, counts] : constraints_) {
      std::size_t sum = 0;
      for (const auto& [v, c] : counts) sum += c;
      require(sum == k_, "required counts of attribute " + std::to_string(j) + " sum to " +
                             std::to_string(sum) + ", expected k=" + std::to_string(k_));
    }
  }

  [[nodiscard]] std::size_t k() const { return k_; }
  [[nodiscard]] const std::map<std::size_t, ValueCounts>& constraints() const { return constraints_; }
  [[nodiscard]] std::size_t num_constrained() const { return constraints_.size(); }
  [[nodiscard]] bool constrains(std::size_t j) const { return constraints_.contains(j); }

  [[nodiscard]] std::vector<std::size_t> constrained_attributes() const {
    std::vector<std::size_t> out;
    for (const auto& [j, counts] : constraints_) out.push_back(j);
    return out;
  }

  [[nodiscard]] std::size_t required(std::size_t j, ValueIndex v) const {
    auto it = constraints_.find(j);
    if (it == constraints_.end()) return 0;
    auto vit = it->second.find(v);
    return vit == it->second.end() ? 0 : vit->second;
  }

  /// Checks attribute and value indices against a schema.
  void validate(const AttributeSchema& schema) const {
    for (const auto& [j, counts] : constraints_) {
      require(j < schema.size(), "constrained attribute index out of range");
      for (const auto& [v, c] : counts)
        require(v < schema.domain_size(j), "constrained value index out of range for '" + schema[j].name + "'");
    }
  }

  friend bool operator==(const FairnessSpec&, const FairnessSpec&) = default;

 private:
  std::map<std::size_t, ValueCounts> constraints_;
  std::size_t k_ = 0;
};

struct Query {
  std::vector<double> vector;
  FairnessSpec spec;
};

enum class DistanceMetric { Euclidean, Manhattan, CosineBased, Minkowski };

struct DistanceKind {
  DistanceMetric metric = DistanceMetric::Euclidean;
  double p = 2.0;  // Minkowski order only

  static DistanceKind euclidean() { return {DistanceMetric::Euclidean, 2.0}; }
  static DistanceKind manhattan() { return {DistanceMetric::Manhattan, 1.0}; }
  static DistanceKind cosine() { return {DistanceMetric::CosineBased, 2.0}; }
  static DistanceKind minkowski(double p) {
    require(std::isfinite(p) && p > 0.0, "Minkowski order must be finite and positive");
    return {DistanceMetric::Minkowski, p};
  }

  friend bool operator==(const DistanceKind&, const DistanceKind&) = default;
};

inline std::string to_string(const DistanceKind& kind) {
  switch (kind.metric) {
    case DistanceMetric::Euclidean: return "euclidean";
    case DistanceMetric::Manhattan: return "manhattan";
    case DistanceMetric::CosineBased: return "cosine";
    case DistanceMetric::Minkowski: {
      std::string s = std::to_string(kind.p);
      s.erase(s.find_last_not_of('0') + 1);
      if (!s.empty() && s.back() == '.') s.pop_back();
      return "minkowski:" + s;
    }
  }
  return "euclidean";
}

inline DistanceKind parse_distance_kind(const std::string& text) {
  if (text == "euclidean" || text == "l2") return DistanceKind::euclidean();
  if (text == "manhattan" || text == "l1") return DistanceKind::manhattan();
  if (text == "cosine") return DistanceKind::cosine();
  if (text.rfind("minkowski:", 0) == 0) {
    try {
      return DistanceKind::minkowski(std::stod(text.substr(10)));
    } catch (const std::invalid_argument&) {
    }
  }
  throw InputError("unknown distance kind '" + text + "'");
}

/// Distance between x and q. Cosine-based distance is 1 - cos(x, q) and
/// rejects zero vectors. Minkowski uses |x_i - q_i|^p so odd orders stay a
/// metric.
inline double distance(std::span<const double> x, std::span<const double> q, const DistanceKind& kind) {
  require(x.size() == q.size(), "distance: dimension mismatch");
  const std::size_t d = x.size();
  switch (kind.metric) {
    case DistanceMetric::Euclidean: {
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double t = x[i] - q[i];
        s += t * t;
      }
      return std::sqrt(s);
    }
    case DistanceMetric::Manhattan: {
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) s += std::abs(x[i] - q[i]);
      return s;
    }
    case DistanceMetric::CosineBased: {
      double dot = 0.0, nx = 0.0, nq = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        dot += x[i] * q[i];
        nx += x[i] * x[i];
        nq += q[i] * q[i];
      }
      if (nx == 0.0 || nq == 0.0) throw std::domain_error("cosine distance undefined for a zero vector");
      double cos = dot / std::sqrt(nx * nq);
      cos = std::clamp(cos, -1.0, 1.0);
      return 1.0 - cos;
    }
    case DistanceMetric::Minkowski: {
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) s += std::pow(std::abs(x[i] - q[i]), kind.p);
      return std::pow(s, 1.0 / kind.p);
    }
  }
  return 0.0;
}

}  // namespace fairknn
