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

#include "ecorec/ranking.hpp"

#include <algorithm>
#include <numeric>

#include "json.hpp"

#include "ecorec/error.hpp"

namespace ecorec::eval {

using datamodel::EntityKind;
using datamodel::Interactions;
using datamodel::PatternSet;

std::vector<std::uint32_t> rank_topk(std::span<const double> scores, std::size_t k,
                                     const PatternSet& exclusions) {
  std::vector<std::uint32_t> candidates;
  candidates.reserve(scores.size());
  for (std::uint32_t p = 0; p < scores.size(); ++p) {
    if (!exclusions.contains(p)) candidates.push_back(p);
  }
  if (k > candidates.size()) {
    throw ConfigError("rank_topk: k=" + std::to_string(k) + " exceeds " +
                      std::to_string(candidates.size()) + " candidate patterns");
  }
  const auto before = [&](std::uint32_t a, std::uint32_t b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  };
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                    candidates.end(), before);
  candidates.resize(k);
  return candidates;
}

TopKMetrics metrics_at_k(std::span<const std::uint32_t> topk, const PatternSet& relevant,
                         std::size_t k) {
  if (relevant.empty()) throw EvaluationError("metrics_at_k: empty relevant set");
  if (k == 0 || topk.size() != k) {
    throw EvaluationError("metrics_at_k: top-k list has " + std::to_string(topk.size()) +
                          " entries, k=" + std::to_string(k));
  }
  TopKMetrics m;
  for (const std::uint32_t p : topk) m.true_positives += relevant.contains(p) ? 1 : 0;
  m.precision = static_cast<double>(m.true_positives) / static_cast<double>(k);
  m.recall = static_cast<double>(m.true_positives) / static_cast<double>(relevant.size());
  const double denom = m.precision + m.recall;
  m.f1 = denom > 0.0 ? 2.0 * m.precision * m.recall / denom : 0.0;
  return m;
}

namespace {

PatternSet merged_exclusions(std::uint32_t region,
                             std::span<const Interactions* const> excluded) {
  PatternSet out;
  for (const Interactions* source : excluded) {
    if (!source) continue;
    if (const auto it = source->find(region); it != source->end()) {
      out.insert(it->second.begin(), it->second.end());
    }
  }
  return out;
}

}  // namespace

EvalReport evaluate_ranking(const Matrix& regions, const Matrix& patterns,
                            const Interactions& relevant,
                            std::span<const Interactions* const> excluded, std::size_t k) {
  std::size_t evaluated = 0;
  for (const auto& [region, set] : relevant) evaluated += set.empty() ? 0 : 1;
  if (evaluated == 0) throw EvaluationError("evaluate: no region has relevant patterns");

  EvalReport report;
  report.k = k;
  std::vector<double> scores(static_cast<std::size_t>(patterns.rows()));
  for (const auto& [region, set] : relevant) {
    if (set.empty()) continue;
    if (region >= regions.rows()) {
      throw EvaluationError("evaluate: region index " + std::to_string(region) + " out of range");
    }
    Eigen::Map<Vector>(scores.data(), patterns.rows()) = patterns * regions.row(region).transpose();
    RegionResult row;
    row.region = region;
    row.topk = rank_topk(scores, k, merged_exclusions(region, excluded));
    const TopKMetrics m = metrics_at_k(row.topk, set, k);
    row.true_positives = m.true_positives;
    row.relevant = set.size();
    row.precision = m.precision;
    row.recall = m.recall;
    report.precision_at_k += m.precision;
    report.recall_at_k += m.recall;
    report.regions.push_back(std::move(row));
  }
  report.regions_evaluated = report.regions.size();
  const auto n = static_cast<double>(report.regions_evaluated);
  report.precision_at_k /= n;
  report.recall_at_k /= n;
  const double denom = report.precision_at_k + report.recall_at_k;
  report.f1_at_k = denom > 0.0 ? 2.0 * report.precision_at_k * report.recall_at_k / denom : 0.0;
  return report;
}

double random_recall_expectation(const Interactions& relevant,
                                 std::span<const Interactions* const> excluded,
                                 std::size_t n_patterns, std::size_t k) {
  double total = 0.0;
  std::size_t regions = 0;
  for (const auto& [region, set] : relevant) {
    if (set.empty()) continue;
    const std::size_t excluded_count = merged_exclusions(region, excluded).size();
    const std::size_t candidates = n_patterns - excluded_count;
    total += static_cast<double>(std::min(k, candidates)) / static_cast<double>(candidates);
    ++regions;
  }
  if (regions == 0) throw EvaluationError("random_recall_expectation: nothing to evaluate");
  return total / static_cast<double>(regions);
}

std::string report_to_json(const EvalReport& report, const datamodel::EntityIndex& entities) {
  nlohmann::ordered_json j;
  j["k"] = report.k;
  j["precision_at_k"] = report.precision_at_k;
  j["recall_at_k"] = report.recall_at_k;
  j["f1_at_k"] = report.f1_at_k;
  j["regions_evaluated"] = report.regions_evaluated;
  auto& rows = j["regions"] = nlohmann::ordered_json::array();
  for (const RegionResult& r : report.regions) {
    nlohmann::ordered_json row;
    row["region"] = entities.name({EntityKind::Region, r.region});
    row["tp"] = r.true_positives;
    row["relevant"] = r.relevant;
    row["precision"] = r.precision;
    row["recall"] = r.recall;
    auto& top = row["topk"] = nlohmann::ordered_json::array();
    for (const std::uint32_t p : r.topk) top.push_back(entities.name({EntityKind::Pattern, p}));
    rows.push_back(std::move(row));
  }
  return j.dump(2) + "\n";
}

}  // namespace ecorec::eval
