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

#include <string>
#include <vector>

#include "ecorec/datamodel.hpp"
#include "ecorec/kg.hpp"
#include "ecorec/model.hpp"
#include "ecorec/ranking.hpp"

namespace ecorec::eval {

// A loaded corpus with its pruned graph and seeded split, shared by every
// experiment run over it.
struct PreparedData {
  datamodel::Dataset dataset;
  kg::KnowledgeGraph graph;
  datamodel::InteractionSplit split;

  model::ModelInputs inputs() const;
  model::Shapes shapes() const;
  model::TrainingData training_data() const;
};

// Builds and prunes the graph and splits the positives with a seed derived
// from `seed`.
PreparedData prepare(datamodel::Dataset dataset, std::size_t min_degree, std::uint64_t seed);

// Ranks every pattern for `region`, excluding train and validation positives.
std::vector<std::uint32_t> rank_region(const PreparedData& data, std::uint32_t region,
                                       const model::ModelParameters& params,
                                       const model::ModelOptions& options, std::size_t k);

// Test-split evaluation; train and validation positives are never candidates.
EvalReport evaluate(const PreparedData& data, const model::ModelParameters& params,
                    const model::ModelOptions& options, std::size_t k);

struct RunResult {
  model::TrainResult training;
  EvalReport report;
};

RunResult train_and_evaluate(const PreparedData& data, const model::TrainConfig& cfg,
                             const model::VariantSpec& variant);

struct TableRow {
  std::string label;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// One train+evaluate per variant under the same config and seed.
std::vector<TableRow> run_ablation(const PreparedData& data, const model::TrainConfig& cfg,
                                   const std::vector<model::VariantSpec>& variants);

enum class SweepParam { EmbeddingDim, BatchSize, Layers, FusionMethod };

SweepParam parse_sweep_param(std::string_view text);
const char* to_string(SweepParam param);

// Returns `cfg` with `param` set to `value`; throws ConfigError on an
// invalid value.
model::TrainConfig apply_sweep_value(model::TrainConfig cfg, SweepParam param,
                                     const std::string& value);

// One train+evaluate per value with everything else fixed. All values are
// validated before any training starts.
std::vector<TableRow> run_sweep(const PreparedData& data, const model::TrainConfig& cfg,
                                const model::VariantSpec& variant, SweepParam param,
                                const std::vector<std::string>& values);

// Aligned text table: label, Precision@k, Recall@k, F1@k.
std::string format_table(const std::string& title, const std::vector<TableRow>& rows, std::size_t k);

}  // namespace ecorec::eval
