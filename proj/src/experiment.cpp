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

#include "ecorec/experiment.hpp"

#include <cstdio>
#include <sstream>

#include "ecorec/error.hpp"

namespace ecorec::eval {

namespace {
constexpr std::uint64_t kSplitStream = 100;
}

model::ModelInputs PreparedData::inputs() const {
  return {&graph, dataset.text ? &*dataset.text : nullptr, dataset.image ? &*dataset.image : nullptr};
}

model::Shapes PreparedData::shapes() const {
  return {dataset.n_regions(), dataset.n_patterns(), dataset.n_features(),
          dataset.text ? static_cast<std::size_t>(dataset.text->dim()) : 0,
          dataset.image ? static_cast<std::size_t>(dataset.image->dim()) : 0};
}

model::TrainingData PreparedData::training_data() const { return {inputs(), &split, shapes()}; }

PreparedData prepare(datamodel::Dataset dataset, std::size_t min_degree, std::uint64_t seed) {
  PreparedData data;
  data.graph = kg::prune_graph(kg::build_graph(dataset), min_degree);
  data.split = datamodel::split_interactions(dataset.positives, derive_seed(seed, kSplitStream));
  data.dataset = std::move(dataset);
  return data;
}

std::vector<std::uint32_t> rank_region(const PreparedData& data, std::uint32_t region,
                                       const model::ModelParameters& params,
                                       const model::ModelOptions& options, std::size_t k) {
  const Vector scores = model::score_all(region, params, data.inputs(), options);
  datamodel::PatternSet exclusions;
  for (const auto* source : {&data.split.train, &data.split.validation}) {
    if (const auto it = source->find(region); it != source->end()) {
      exclusions.insert(it->second.begin(), it->second.end());
    }
  }
  return rank_topk(std::span<const double>(scores.data(), static_cast<std::size_t>(scores.size())), k,
                   exclusions);
}

EvalReport evaluate(const PreparedData& data, const model::ModelParameters& params,
                    const model::ModelOptions& options, std::size_t k) {
  if (datamodel::count_pairs(data.split.test) == 0) throw EvaluationError("evaluate: empty test split");
  const model::Representations reps = model::compute_representations(params, data.inputs(), options);
  const datamodel::Interactions* excluded[] = {&data.split.train, &data.split.validation};
  return evaluate_ranking(reps.regions, reps.patterns, data.split.test, excluded, k);
}

RunResult train_and_evaluate(const PreparedData& data, const model::TrainConfig& cfg,
                             const model::VariantSpec& variant) {
  RunResult run;
  run.training = model::train(data.training_data(), cfg, variant);
  run.report = evaluate(data, run.training.params, model::options_of(cfg, variant), cfg.k);
  return run;
}

std::vector<TableRow> run_ablation(const PreparedData& data, const model::TrainConfig& cfg,
                                   const std::vector<model::VariantSpec>& variants) {
  std::vector<TableRow> rows;
  for (const auto& variant : variants) {
    const RunResult run = train_and_evaluate(data, cfg, variant);
    rows.push_back({variant.name(), run.report.precision_at_k, run.report.recall_at_k, run.report.f1_at_k});
  }
  return rows;
}

SweepParam parse_sweep_param(std::string_view text) {
  if (text == "embedding_dim") return SweepParam::EmbeddingDim;
  if (text == "batch_size") return SweepParam::BatchSize;
  if (text == "layers") return SweepParam::Layers;
  if (text == "fusion_method") return SweepParam::FusionMethod;
  throw ConfigError("unknown sweep parameter '" + std::string(text) +
                    "' (expected embedding_dim, batch_size, layers or fusion_method)");
}

const char* to_string(SweepParam param) {
  switch (param) {
    case SweepParam::EmbeddingDim: return "embedding_dim";
    case SweepParam::BatchSize: return "batch_size";
    case SweepParam::Layers: return "layers";
    case SweepParam::FusionMethod: return "fusion_method";
  }
  return "?";
}

model::TrainConfig apply_sweep_value(model::TrainConfig cfg, SweepParam param, const std::string& value) {
  auto integer = [&](long long min) {
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != value.size() || value.empty() || v < min) {
      throw ConfigError(std::string("invalid ") + to_string(param) + " value '" + value + "'");
    }
    return static_cast<std::size_t>(v);
  };
  switch (param) {
    case SweepParam::EmbeddingDim: cfg.embedding_dim = integer(1); break;
    case SweepParam::BatchSize: cfg.batch_size = integer(1); break;
    case SweepParam::Layers: cfg.layers = integer(0); break;
    case SweepParam::FusionMethod: cfg.fusion.method = multimodal::parse_fusion_method(value); break;
  }
  return cfg;
}

std::vector<TableRow> run_sweep(const PreparedData& data, const model::TrainConfig& cfg,
                                const model::VariantSpec& variant, SweepParam param,
                                const std::vector<std::string>& values) {
  if (values.empty()) throw ConfigError("sweep: no values given");
  std::vector<model::TrainConfig> configs;
  for (const auto& value : values) configs.push_back(apply_sweep_value(cfg, param, value));
  std::vector<TableRow> rows;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const RunResult run = train_and_evaluate(data, configs[i], variant);
    rows.push_back({values[i], run.report.precision_at_k, run.report.recall_at_k, run.report.f1_at_k});
  }
  return rows;
}

std::string format_table(const std::string& title, const std::vector<TableRow>& rows, std::size_t k) {
  std::size_t width = title.size();
  for (const auto& row : rows) width = std::max(width, row.label.size());
  std::ostringstream out;
  const std::string ks = std::to_string(k);
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%-*s  %12s  %12s  %12s\n", static_cast<int>(width), title.c_str(),
                ("Precision@" + ks).c_str(), ("Recall@" + ks).c_str(), ("F1@" + ks).c_str());
  out << buf;
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof(buf), "%-*s  %12.4f  %12.4f  %12.4f\n", static_cast<int>(width),
                  row.label.c_str(), row.precision, row.recall, row.f1);
    out << buf;
  }
  return out.str();
}

}  // namespace ecorec::eval
