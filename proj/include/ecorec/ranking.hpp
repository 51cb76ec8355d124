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

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ecorec/datamodel.hpp"
#include "ecorec/linalg.hpp"

namespace ecorec::eval {

struct TopKMetrics {
  std::size_t true_positives = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Indices of the k highest scores, descending, ties by ascending index.
// Excluded patterns never appear. Throws ConfigError if fewer than k
// candidates remain.
std::vector<std::uint32_t> rank_topk(std::span<const double> scores, std::size_t k,
                                     const datamodel::PatternSet& exclusions = {});

// precision = TP/k, recall = TP/|relevant|, f1 their harmonic mean (0 when
// both are 0). `relevant` must be non-empty.
TopKMetrics metrics_at_k(std::span<const std::uint32_t> topk,
                         const datamodel::PatternSet& relevant, std::size_t k);

struct RegionResult {
  std::uint32_t region = 0;
  std::size_t true_positives = 0;
  std::size_t relevant = 0;
  double precision = 0.0;
  double recall = 0.0;
  std::vector<std::uint32_t> topk;
};

struct EvalReport {
  std::size_t k = 0;
  // Unweighted means over evaluated regions.
  double precision_at_k = 0.0;
  double recall_at_k = 0.0;
  // Harmonic mean of the two macro averages above.
  double f1_at_k = 0.0;
  std::size_t regions_evaluated = 0;
  std::vector<RegionResult> regions;
};

// All-ranking evaluation: for every region with relevant patterns, rank all
// patterns by regions.row(r) . patterns.row(p), drop the region's excluded
// patterns (from each map in `excluded`) and score the top k.
// Throws EvaluationError when `relevant` is empty.
EvalReport evaluate_ranking(const Matrix& regions, const Matrix& patterns,
                            const datamodel::Interactions& relevant,
                            std::span<const datamodel::Interactions* const> excluded,
                            std::size_t k);

// Mean Recall@k of a uniformly random ranking over the same candidates:
// each region contributes min(k, C)/C with C its candidate count.
double random_recall_expectation(const datamodel::Interactions& relevant,
                                 std::span<const datamodel::Interactions* const> excluded,
                                 std::size_t n_patterns, std::size_t k);

// JSON text of the report with names resolved through `entities`.
std::string report_to_json(const EvalReport& report, const datamodel::EntityIndex& entities);

}  // namespace ecorec::eval
