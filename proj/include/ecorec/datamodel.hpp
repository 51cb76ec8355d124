// Copyright 2026 The ecorec Authors.
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

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ecorec/linalg.hpp"

namespace ecorec::datamodel {

enum class EntityKind : std::uint8_t { Region = 0, Pattern = 1, Feature = 2 };

const char* to_string(EntityKind kind);

struct EntityId {
  EntityKind kind = EntityKind::Region;
  std::uint32_t index = 0;

  auto operator<=>(const EntityId&) const = default;
};

// Dense string <-> id interning. Indices are contiguous from 0 within a kind
// and a name belongs to exactly one kind.
class EntityIndex {
 public:
  // Returns the existing id for `name`, or assigns the next index of `kind`.
  // Throws SchemaError if the name is already registered under another kind.
  EntityId intern(std::string_view name, EntityKind kind);

  std::optional<EntityId> find(std::string_view name) const;
  const std::string& name(EntityId id) const;
  std::size_t count(EntityKind kind) const;
  std::span<const std::string> names(EntityKind kind) const;

  bool operator==(const EntityIndex& other) const { return names_ == other.names_; }

 private:
  std::unordered_map<std::string, EntityId> by_name_;
  std::array<std::vector<std::string>, 3> names_;
};

// Relation type names, interned in first-seen order.
class RelationIndex {
 public:
  std::uint32_t intern(std::string_view name);
  const std::string& name(std::uint32_t id) const { return names_.at(id); }
  std::size_t size() const { return names_.size(); }
  std::span<const std::string> names() const { return names_; }

  bool operator==(const RelationIndex& other) const { return names_ == other.names_; }

 private:
  std::unordered_map<std::string, std::uint32_t> by_name_;
  std::vector<std::string> names_;
};

// head is always a region, tail always a feature.
struct Triple {
  std::uint32_t region = 0;
  std::uint32_t relation = 0;
  std::uint32_t feature = 0;

  auto operator<=>(const Triple&) const = default;
};

using PatternSet = std::set<std::uint32_t>;
// Region index -> interacted pattern indices (the non-zero entries of Y).
using Interactions = std::map<std::uint32_t, PatternSet>;

struct InteractionSplit {
  Interactions train;
  Interactions validation;
  Interactions test;
};

// Raw per-pattern vectors for one modality; row p belongs to pattern index p.
struct FeatureMatrix {
  std::string modality;
  Matrix values;

  Eigen::Index dim() const { return values.cols(); }
};

struct TripleData {
  EntityIndex entities;
  RelationIndex relations;
  std::vector<Triple> triples;
};

// Everything the engine consumes, sharing one entity dictionary.
struct Dataset {
  EntityIndex entities;
  RelationIndex relations;
  std::vector<Triple> triples;
  Interactions positives;
  std::optional<FeatureMatrix> text;
  std::optional<FeatureMatrix> image;

  std::size_t n_regions() const { return entities.count(EntityKind::Region); }
  std::size_t n_patterns() const { return entities.count(EntityKind::Pattern); }
  std::size_t n_features() const { return entities.count(EntityKind::Feature); }
};

// --- file formats --------------------------------------------------------

TripleData load_triples(const std::filesystem::path& path);
void save_triples(const std::filesystem::path& path, const std::vector<Triple>& triples,
                  const EntityIndex& entities, const RelationIndex& relations);

// Region and pattern names are resolved in `entities` or interned there.
Interactions load_interactions(const std::filesystem::path& path, EntityIndex& entities);
void save_interactions(const std::filesystem::path& path, const Interactions& positives,
                       const EntityIndex& entities);

// Every pattern registered in `entities` must have exactly one row.
FeatureMatrix load_feature_matrix(const std::filesystem::path& path, const EntityIndex& entities,
                                  std::optional<Eigen::Index> expected_dim = std::nullopt);
void save_feature_matrix(const std::filesystem::path& path, const FeatureMatrix& features,
                         const EntityIndex& entities);

struct DatasetPaths {
  std::filesystem::path triples;
  std::filesystem::path interactions;
  std::optional<std::filesystem::path> text_features;
  std::optional<std::filesystem::path> image_features;
};

Dataset load_dataset(const DatasetPaths& paths);

// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

// --- splitting -----------------------------------------------------------

// Per region with n >= 2 positives: max(1, round(0.2 n)) go to test and
// round(0.2 * remainder) of the rest to validation. Single-positive regions
// keep their positive in train.
InteractionSplit split_interactions(const Interactions& positives, std::uint64_t seed);

std::size_t count_pairs(const Interactions& interactions);

// --- synthetic planted-partition corpus ----------------------------------

struct GenConfig {
  std::size_t n_regions = 200;
  std::size_t n_patterns = 40;
  std::size_t n_features = 60;
  std::size_t n_clusters = 4;
  double p_in = 0.5;
  double p_out = 0.02;
  double feature_noise = 0.1;
  std::size_t text_dim = 32;
  std::size_t image_dim = 64;
  std::size_t n_relations = 29;
  // Region -> feature links per region, used when n_triples == 0.
  std::size_t links_per_region = 8;
  // Probability that a link goes to a uniformly random feature instead of
  // one from the region's own cluster.
  double link_noise = 0.1;
  // Exact total triple count; 0 means links_per_region per region.
  std::size_t n_triples = 0;
  std::uint64_t seed = 0;

  // Throws ConfigError on violated invariants.
  void validate() const;
};

struct SyntheticData {
  Dataset dataset;
  std::vector<std::uint32_t> region_cluster;
  std::vector<std::uint32_t> pattern_cluster;
  std::vector<std::uint32_t> feature_cluster;
};

SyntheticData gen_synthetic(const GenConfig& cfg);

// Writes triples.tsv, interactions.tsv, text_features.tsv, image_features.tsv
// and clusters.tsv under `dir`.
void write_synthetic(const std::filesystem::path& dir, const SyntheticData& data);

}  // namespace ecorec::datamodel
