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

#include "ecorec/datamodel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "ecorec/error.hpp"

namespace ecorec::datamodel {
namespace {

std::size_t slot(EntityKind kind) { return static_cast<std::size_t>(kind); }

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

bool is_blank_or_comment(std::string_view line) {
  const auto first = line.find_first_not_of(" \t");
  return first == std::string_view::npos || line[first] == '#';
}

// Reads `path` line by line, stripping a trailing CR. The callback receives
// 1-based line numbers.
template <typename Fn>
void for_each_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    fn(std::string_view(line), number);
  }
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

EntityId intern_at(EntityIndex& entities, std::string_view name, EntityKind kind,
                   const std::filesystem::path& path, std::size_t line) {
  try {
    return entities.intern(name, kind);
  } catch (const SchemaError& e) {
    throw SchemaError(path.string() + ":" + std::to_string(line) + ": " + e.what());
  }
}

double parse_double(std::string_view text, const std::filesystem::path& path, std::size_t line) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size() || text.empty()) {
    throw ParseError(path.string(), line, "invalid number '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace

const char* to_string(EntityKind kind) {
  switch (kind) {
    case EntityKind::Region: return "region";
    case EntityKind::Pattern: return "pattern";
    case EntityKind::Feature: return "feature";
  }
  return "?";
}

EntityId EntityIndex::intern(std::string_view name, EntityKind kind) {
  const std::string key(name);
  if (const auto it = by_name_.find(key); it != by_name_.end()) {
    if (it->second.kind != kind) {
      throw SchemaError("name '" + key + "' used as both " + to_string(it->second.kind) +
                        " and " + to_string(kind));
    }
    return it->second;
  }
  auto& names = names_[slot(kind)];
  const EntityId id{kind, static_cast<std::uint32_t>(names.size())};
  names.push_back(key);
  by_name_.emplace(key, id);
  return id;
}

std::optional<EntityId> EntityIndex::find(std::string_view name) const {
  if (const auto it = by_name_.find(std::string(name)); it != by_name_.end()) return it->second;
  return std::nullopt;
}

const std::string& EntityIndex::name(EntityId id) const {
  return names_[slot(id.kind)].at(id.index);
}

std::size_t EntityIndex::count(EntityKind kind) const { return names_[slot(kind)].size(); }

std::span<const std::string> EntityIndex::names(EntityKind kind) const {
  return names_[slot(kind)];
}

std::uint32_t RelationIndex::intern(std::string_view name) {
  const std::string key(name);
  if (const auto it = by_name_.find(key); it != by_name_.end()) return it->second;
  const auto id = static_cast<std::uint32_t>(names_.size());
  names_.push_back(key);
  by_name_.emplace(key, id);
  return id;
}

std::string format_double(double value) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw Error("cannot format number");
  return std::string(buf, end);
}

TripleData load_triples(const std::filesystem::path& path) {
  TripleData data;
  std::set<Triple> seen;
  for_each_line(path, [&](std::string_view line, std::size_t number) {
    if (is_blank_or_comment(line)) return;
    const auto fields = split_tabs(line);
    if (fields.size() != 3) {
      throw ParseError(path.string(), number,
                       "expected 3 tab-separated fields, got " + std::to_string(fields.size()));
    }
    for (const auto field : fields) {
      if (field.empty()) throw ParseError(path.string(), number, "empty field");
    }
    const EntityId head = intern_at(data.entities, fields[0], EntityKind::Region, path, number);
    const std::uint32_t relation = data.relations.intern(fields[1]);
    const EntityId tail = intern_at(data.entities, fields[2], EntityKind::Feature, path, number);
    const Triple triple{head.index, relation, tail.index};
    if (seen.insert(triple).second) data.triples.push_back(triple);
  });
  return data;
}

void save_triples(const std::filesystem::path& path, const std::vector<Triple>& triples,
                  const EntityIndex& entities, const RelationIndex& relations) {
  auto out = open_for_write(path);
  for (const Triple& t : triples) {
    out << entities.name({EntityKind::Region, t.region}) << '\t' << relations.name(t.relation)
        << '\t' << entities.name({EntityKind::Feature, t.feature}) << '\n';
  }
}

Interactions load_interactions(const std::filesystem::path& path, EntityIndex& entities) {
  Interactions positives;
  for_each_line(path, [&](std::string_view line, std::size_t number) {
    if (is_blank_or_comment(line)) return;
    const auto fields = split_tabs(line);
    if (fields.size() != 2 || fields[0].empty() || fields[1].empty()) {
      throw ParseError(path.string(), number, "expected 'region<TAB>pattern'");
    }
    const EntityId region = intern_at(entities, fields[0], EntityKind::Region, path, number);
    const EntityId pattern = intern_at(entities, fields[1], EntityKind::Pattern, path, number);
    positives[region.index].insert(pattern.index);
  });
  return positives;
}

void save_interactions(const std::filesystem::path& path, const Interactions& positives,
                       const EntityIndex& entities) {
  auto out = open_for_write(path);
  for (const auto& [region, patterns] : positives) {
    const std::string& region_name = entities.name({EntityKind::Region, region});
    for (const std::uint32_t p : patterns) {
      out << region_name << '\t' << entities.name({EntityKind::Pattern, p}) << '\n';
    }
  }
}

FeatureMatrix load_feature_matrix(const std::filesystem::path& path, const EntityIndex& entities,
                                  std::optional<Eigen::Index> expected_dim) {
  FeatureMatrix features;
  bool have_header = false;
  Eigen::Index dim = 0;
  std::vector<bool> filled;

  for_each_line(path, [&](std::string_view line, std::size_t number) {
    if (!have_header) {
      if (line.find_first_not_of(" \t") == std::string_view::npos) return;
      std::istringstream header{std::string(line)};
      std::string modality_tok, dim_tok;
      header >> modality_tok >> dim_tok;
      if (modality_tok.rfind("#modality=", 0) != 0 || dim_tok.rfind("dim=", 0) != 0) {
        throw ParseError(path.string(), number, "expected header '#modality=<name> dim=<D>'");
      }
      features.modality = modality_tok.substr(10);
      const std::string dim_text = dim_tok.substr(4);
      long long parsed = 0;
      const auto [end, ec] =
          std::from_chars(dim_text.data(), dim_text.data() + dim_text.size(), parsed);
      if (ec != std::errc() || end != dim_text.data() + dim_text.size() || parsed <= 0) {
        throw ParseError(path.string(), number, "invalid dimension '" + dim_text + "'");
      }
      dim = static_cast<Eigen::Index>(parsed);
      if (expected_dim && *expected_dim != dim) {
        throw DimensionError(path.string() + ": header declares dim=" + std::to_string(dim) +
                             ", expected " + std::to_string(*expected_dim));
      }
      const auto n = static_cast<Eigen::Index>(entities.count(EntityKind::Pattern));
      features.values = Matrix::Zero(n, dim);
      filled.assign(static_cast<std::size_t>(n), false);
      have_header = true;
      return;
    }
    if (is_blank_or_comment(line)) return;
    const auto fields = split_tabs(line);
    if (fields.size() != 2 || fields[0].empty()) {
      throw ParseError(path.string(), number, "expected 'pattern<TAB>v1,...,vD'");
    }
    const auto id = entities.find(fields[0]);
    if (!id || id->kind != EntityKind::Pattern) {
      throw SchemaError(path.string() + ":" + std::to_string(number) + ": '" +
                        std::string(fields[0]) + "' is not a known pattern");
    }
    if (filled[id->index]) {
      throw ParseError(path.string(), number, "duplicate row for '" + std::string(fields[0]) + "'");
    }
    Eigen::Index col = 0;
    std::string_view rest = fields[1];
    while (true) {
      const auto comma = rest.find(',');
      const std::string_view tok = rest.substr(0, comma);
      if (col >= dim) {
        throw DimensionError(path.string() + ":" + std::to_string(number) + ": row '" +
                             std::string(fields[0]) + "' has more than " + std::to_string(dim) +
                             " values");
      }
      features.values(id->index, col++) = parse_double(tok, path, number);
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (col != dim) {
      throw DimensionError(path.string() + ":" + std::to_string(number) + ": row '" +
                           std::string(fields[0]) + "' has " + std::to_string(col) +
                           " values, expected " + std::to_string(dim));
    }
    filled[id->index] = true;
  });

  if (!have_header) throw ParseError(path.string(), 1, "missing '#modality=<name> dim=<D>' header");

  std::vector<std::string> missing;
  for (std::size_t p = 0; p < filled.size(); ++p) {
    if (!filled[p]) missing.push_back(entities.name({EntityKind::Pattern, static_cast<std::uint32_t>(p)}));
  }
  if (!missing.empty()) {
    std::string msg = path.string() + ": missing rows for " + std::to_string(missing.size()) +
                      " pattern(s):";
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg += " " + missing[i];
    if (missing.size() > 20) msg += " ...";
    throw CompletenessError(msg);
  }
  return features;
}

void save_feature_matrix(const std::filesystem::path& path, const FeatureMatrix& features,
                         const EntityIndex& entities) {
  auto out = open_for_write(path);
  out << "#modality=" << features.modality << " dim=" << features.dim() << '\n';
  for (Eigen::Index p = 0; p < features.values.rows(); ++p) {
    out << entities.name({EntityKind::Pattern, static_cast<std::uint32_t>(p)}) << '\t';
    for (Eigen::Index c = 0; c < features.values.cols(); ++c) {
      if (c) out << ',';
      out << format_double(features.values(p, c));
    }
    out << '\n';
  }
}

Dataset load_dataset(const DatasetPaths& paths) {
  TripleData graph = load_triples(paths.triples);
  Dataset ds;
  ds.entities = std::move(graph.entities);
  ds.relations = std::move(graph.relations);
  ds.triples = std::move(graph.triples);
  ds.positives = load_interactions(paths.interactions, ds.entities);
  if (paths.text_features) ds.text = load_feature_matrix(*paths.text_features, ds.entities);
  if (paths.image_features) ds.image = load_feature_matrix(*paths.image_features, ds.entities);
  return ds;
}

InteractionSplit split_interactions(const Interactions& positives, std::uint64_t seed) {
  if (positives.empty()) throw ConfigError("split_interactions: no positives to split");
  std::mt19937_64 rng(seed);
  InteractionSplit split;
  for (const auto& [region, patterns] : positives) {
    std::vector<std::uint32_t> order(patterns.begin(), patterns.end());
    const std::size_t n = order.size();
    if (n == 0) continue;
    for (std::size_t i = n - 1; i > 0; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i);
      std::swap(order[i], order[pick(rng)]);
    }
    std::size_t n_test = 0;
    std::size_t n_val = 0;
    if (n >= 2) {
      n_test = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.2 * n)));
      n_val = static_cast<std::size_t>(std::lround(0.2 * static_cast<double>(n - n_test)));
    }
    for (std::size_t i = 0; i < n; ++i) {
      Interactions& target = i < n_test ? split.test : (i < n_test + n_val ? split.validation : split.train);
      target[region].insert(order[i]);
    }
  }
  return split;
}

std::size_t count_pairs(const Interactions& interactions) {
  std::size_t total = 0;
  for (const auto& [region, patterns] : interactions) total += patterns.size();
  return total;
}

void GenConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("gen: " + msg); };
  if (n_regions == 0 || n_patterns == 0 || n_features == 0 || n_clusters == 0) {
    fail("n_regions, n_patterns, n_features and n_clusters must be positive");
  }
  if (!(p_in >= 0.0 && p_in <= 1.0 && p_out >= 0.0 && p_out <= 1.0)) fail("probabilities must lie in [0,1]");
  if (!(p_in > p_out)) fail("p_in must exceed p_out");
  if (n_clusters > std::min(n_regions, n_patterns)) fail("n_clusters must not exceed min(n_regions, n_patterns)");
  if (n_clusters > n_features) fail("n_clusters must not exceed n_features");
  if (!(feature_noise >= 0.0)) fail("feature_noise must be >= 0");
  if (text_dim == 0 || image_dim == 0) fail("text_dim and image_dim must be positive");
  if (n_relations == 0) fail("n_relations must be positive");
  if (!(link_noise >= 0.0 && link_noise <= 1.0)) fail("link_noise must lie in [0,1]");
  if (n_triples == 0) {
    if (links_per_region == 0 || links_per_region > n_features) fail("links_per_region must lie in [1, n_features]");
  } else {
    if (n_triples < n_regions || n_triples < n_features) fail("n_triples must be at least max(n_regions, n_features)");
    if (n_triples > n_regions * n_features) fail("n_triples exceeds n_regions * n_features");
  }
}

SyntheticData gen_synthetic(const GenConfig& cfg) {
  cfg.validate();
  const std::size_t R = cfg.n_regions, P = cfg.n_patterns, F = cfg.n_features, K = cfg.n_clusters;

  // Members of cluster c among n round-robin-assigned items: c, c+K, ...
  auto members = [K](std::size_t n, std::size_t c) { return (n - c + K - 1) / K; };

  // Each feature is owned by one region of its cluster so every feature
  // appears in at least one triple.
  std::vector<std::vector<std::size_t>> owned(R);
  for (std::size_t f = 0; f < F; ++f) {
    const std::size_t c = f % K;
    owned[c + K * ((f / K) % members(R, c))].push_back(f);
  }

  std::vector<std::size_t> target(R, cfg.links_per_region);
  if (cfg.n_triples > 0) {
    for (std::size_t r = 0; r < R; ++r) target[r] = cfg.n_triples / R + (r < cfg.n_triples % R ? 1 : 0);
  }
  for (std::size_t r = 0; r < R; ++r) {
    if (owned[r].size() > target[r]) {
      if (cfg.n_triples > 0) throw ConfigError("gen: n_triples too small to cover every feature");
      target[r] = owned[r].size();
    }
  }

  std::mt19937_64 link_rng(derive_seed(cfg.seed, 1));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::pair<std::size_t, std::size_t>> links;  // (region, feature), raw ids
  links.reserve(cfg.n_triples > 0 ? cfg.n_triples : R * cfg.links_per_region);
  std::vector<char> linked(F, 0);
  for (std::size_t r = 0; r < R; ++r) {
    const std::size_t c = r % K;
    const std::size_t own_count = members(F, c);
    std::vector<std::size_t> mine = owned[r];
    std::fill(linked.begin(), linked.end(), 0);
    std::size_t own_linked = 0;
    for (std::size_t f : mine) {
      linked[f] = 1;
      own_linked += 1;  // owned features are always same-cluster
    }
    std::uniform_int_distribution<std::size_t> any(0, F - 1);
    std::uniform_int_distribution<std::size_t> own(0, own_count - 1);
    while (mine.size() < target[r]) {
      std::size_t f = F;
      for (int attempt = 0; attempt < 64 && f == F; ++attempt) {
        const bool noisy = unit(link_rng) < cfg.link_noise || own_linked == own_count;
        const std::size_t candidate = noisy ? any(link_rng) : c + K * own(link_rng);
        if (!linked[candidate]) f = candidate;
      }
      if (f == F) f = static_cast<std::size_t>(std::find(linked.begin(), linked.end(), 0) - linked.begin());
      linked[f] = 1;
      if (f % K == c) ++own_linked;
      mine.push_back(f);
    }
    for (std::size_t f : mine) links.emplace_back(r, f);
  }

  std::mt19937_64 inter_rng(derive_seed(cfg.seed, 2));
  std::vector<std::vector<std::size_t>> region_patterns(R);
  std::vector<std::size_t> pattern_degree(P, 0);
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t p = 0; p < P; ++p) {
      const double prob = (r % K == p % K) ? cfg.p_in : cfg.p_out;
      if (unit(inter_rng) < prob) {
        region_patterns[r].push_back(p);
        ++pattern_degree[p];
      }
    }
  }
  // Every pattern gets at least one (within-cluster) interaction so it is
  // registered by the interactions file.
  for (std::size_t p = 0; p < P; ++p) {
    if (pattern_degree[p] > 0) continue;
    const std::size_t c = p % K;
    const std::size_t r = c + K * ((p / K) % members(R, c));
    auto& list = region_patterns[r];
    list.insert(std::upper_bound(list.begin(), list.end(), p), p);
    ++pattern_degree[p];
  }

  std::mt19937_64 feat_rng(derive_seed(cfg.seed, 3));
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto modality = [&](std::size_t dim) {
    Matrix centroids(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < centroids.size(); ++i) centroids.data()[i] = gauss(feat_rng);
    Matrix raw(static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(dim));
    for (std::size_t p = 0; p < P; ++p) {
      for (std::size_t j = 0; j < dim; ++j) {
        const double noise = cfg.feature_noise > 0.0 ? cfg.feature_noise * gauss(feat_rng) : 0.0;
        raw(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(j)) =
            centroids(static_cast<Eigen::Index>(p % K), static_cast<Eigen::Index>(j)) + noise;
      }
    }
    return raw;
  };
  const Matrix raw_text = modality(cfg.text_dim);
  const Matrix raw_image = modality(cfg.image_dim);

  // Intern in file order so the in-memory result equals a save/load round trip.
  SyntheticData out;
  Dataset& ds = out.dataset;
  std::vector<std::uint32_t> feature_index(F), pattern_index(P);
  for (const auto& [r, f] : links) {
    const EntityId head = ds.entities.intern("R" + std::to_string(r), EntityKind::Region);
    const std::uint32_t rel = ds.relations.intern("rel" + std::to_string(f % cfg.n_relations));
    const EntityId tail = ds.entities.intern("F" + std::to_string(f), EntityKind::Feature);
    feature_index[f] = tail.index;
    ds.triples.push_back({head.index, rel, tail.index});
  }
  for (std::size_t r = 0; r < R; ++r) {
    const EntityId region = ds.entities.intern("R" + std::to_string(r), EntityKind::Region);
    for (std::size_t p : region_patterns[r]) {
      const EntityId pattern = ds.entities.intern("P" + std::to_string(p), EntityKind::Pattern);
      pattern_index[p] = pattern.index;
      ds.positives[region.index].insert(pattern.index);
    }
  }

  auto reorder = [&](const Matrix& raw, const char* name) {
    FeatureMatrix fm{name, Matrix(raw.rows(), raw.cols())};
    for (std::size_t p = 0; p < P; ++p) fm.values.row(pattern_index[p]) = raw.row(static_cast<Eigen::Index>(p));
    return fm;
  };
  ds.text = reorder(raw_text, "text");
  ds.image = reorder(raw_image, "image");

  out.region_cluster.resize(R);
  for (std::size_t r = 0; r < R; ++r) out.region_cluster[ds.entities.find("R" + std::to_string(r))->index] = static_cast<std::uint32_t>(r % K);
  out.pattern_cluster.resize(P);
  for (std::size_t p = 0; p < P; ++p) out.pattern_cluster[pattern_index[p]] = static_cast<std::uint32_t>(p % K);
  out.feature_cluster.resize(F);
  for (std::size_t f = 0; f < F; ++f) out.feature_cluster[feature_index[f]] = static_cast<std::uint32_t>(f % K);
  return out;
}

void write_synthetic(const std::filesystem::path& dir, const SyntheticData& data) {
  std::filesystem::create_directories(dir);
  const Dataset& ds = data.dataset;
  save_triples(dir / "triples.tsv", ds.triples, ds.entities, ds.relations);
  save_interactions(dir / "interactions.tsv", ds.positives, ds.entities);
  if (ds.text) save_feature_matrix(dir / "text_features.tsv", *ds.text, ds.entities);
  if (ds.image) save_feature_matrix(dir / "image_features.tsv", *ds.image, ds.entities);
  auto out = open_for_write(dir / "clusters.tsv");
  out << "# entity\tcluster\n";
  for (std::size_t r = 0; r < data.region_cluster.size(); ++r) {
    out << ds.entities.name({EntityKind::Region, static_cast<std::uint32_t>(r)}) << '\t' << data.region_cluster[r] << '\n';
  }
  for (std::size_t p = 0; p < data.pattern_cluster.size(); ++p) {
    out << ds.entities.name({EntityKind::Pattern, static_cast<std::uint32_t>(p)}) << '\t' << data.pattern_cluster[p] << '\n';
  }
}

}  // namespace ecorec::datamodel
