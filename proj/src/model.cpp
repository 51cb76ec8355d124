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

#include "ecorec/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "json.hpp"

#include "ecorec/error.hpp"
#include "ecorec/ranking.hpp"

namespace ecorec::model {
namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEpsilon = 1e-8;
constexpr double kEmbeddingInitRange = 0.1;

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::string shape(Eigen::Index rows, Eigen::Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

template <typename Params, typename View, typename Fn>
void visit_tensors(Params& p, Fn&& add) {
  add("region_embeddings", p.region_embeddings.data(), p.region_embeddings.rows(), p.region_embeddings.cols());
  add("feature_embeddings", p.feature_embeddings.data(), p.feature_embeddings.rows(), p.feature_embeddings.cols());
  add("pattern_embeddings", p.pattern_embeddings.data(), p.pattern_embeddings.rows(), p.pattern_embeddings.cols());
  for (std::size_t l = 0; l < p.aggregation.size(); ++l) {
    add("aggregation." + std::to_string(l), p.aggregation[l].data(), p.aggregation[l].rows(), p.aggregation[l].cols());
  }
  add("text_projection", p.text_projection.data(), p.text_projection.rows(), p.text_projection.cols());
  add("text_bias", p.text_bias.data(), Eigen::Index{1}, p.text_bias.size());
  add("image_projection", p.image_projection.data(), p.image_projection.rows(), p.image_projection.cols());
  add("image_bias", p.image_bias.data(), Eigen::Index{1}, p.image_bias.size());
  add("fusion.concat", p.fusion.concat.data(), p.fusion.concat.rows(), p.fusion.concat.cols());
  add("fusion.attention", p.fusion.attention.data(), p.fusion.attention.rows(), p.fusion.attention.cols());
  add("fusion.query", p.fusion.query.data(), p.fusion.query.size(), Eigen::Index{1});
}

}  // namespace

// --- variants and configuration ------------------------------------------

std::string VariantSpec::name() const {
  std::string out;
  if (spatial) out += 'S';
  if (image) out += 'I';
  if (text) out += 'T';
  return out;
}

VariantSpec VariantSpec::parse(std::string_view name) {
  VariantSpec v{false, false, false};
  for (const char c : name) {
    bool* flag = c == 'S' ? &v.spatial : c == 'I' ? &v.image : c == 'T' ? &v.text : nullptr;
    if (!flag || *flag) throw ConfigError("invalid variant '" + std::string(name) + "'");
    *flag = true;
  }
  v.validate();
  return v;
}

void VariantSpec::validate() const {
  if (!spatial && !image && !text) throw ConfigError("variant must use at least one of S, I, T");
}

std::vector<VariantSpec> all_variants() {
  return {{true, false, false}, {false, true, false}, {false, false, true}, {true, true, false},
          {true, false, true},  {false, true, true},  {true, true, true}};
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("train: " + msg); };
  if (embedding_dim == 0) fail("embedding_dim must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be positive");
  if (batch_size == 0) fail("batch_size must be positive");
  if (negatives_per_positive == 0) fail("negatives_per_positive must be positive");
  if (!(l2_coeff >= 0.0) || !std::isfinite(l2_coeff)) fail("l2_coeff must be >= 0");
  if (patience == 0) fail("patience must be positive");
  if (k == 0) fail("k must be positive");
}

ModelOptions options_of(const TrainConfig& cfg, const VariantSpec& variant) {
  return {variant, cfg.fusion, cfg.add_pattern_id};
}

// --- parameters ----------------------------------------------------------

std::vector<TensorView> ModelParameters::tensors() {
  std::vector<TensorView> out;
  visit_tensors<ModelParameters, TensorView>(*this, [&](std::string name, double* data, Eigen::Index r, Eigen::Index c) {
    out.push_back({std::move(name), Eigen::Map<Matrix>(data, r, c)});
  });
  return out;
}

std::vector<ConstTensorView> ModelParameters::tensors() const {
  std::vector<ConstTensorView> out;
  visit_tensors<const ModelParameters, ConstTensorView>(*this, [&](std::string name, const double* data, Eigen::Index r, Eigen::Index c) {
    out.push_back({std::move(name), Eigen::Map<const Matrix>(data, r, c)});
  });
  return out;
}

ModelParameters ModelParameters::zeros_like() const {
  ModelParameters z;
  z.region_embeddings = Matrix::Zero(region_embeddings.rows(), region_embeddings.cols());
  z.feature_embeddings = Matrix::Zero(feature_embeddings.rows(), feature_embeddings.cols());
  z.pattern_embeddings = Matrix::Zero(pattern_embeddings.rows(), pattern_embeddings.cols());
  for (const Matrix& w : aggregation) z.aggregation.push_back(Matrix::Zero(w.rows(), w.cols()));
  z.text_projection = Matrix::Zero(text_projection.rows(), text_projection.cols());
  z.text_bias = RowVector::Zero(text_bias.size());
  z.image_projection = Matrix::Zero(image_projection.rows(), image_projection.cols());
  z.image_bias = RowVector::Zero(image_bias.size());
  z.fusion.concat = Matrix::Zero(fusion.concat.rows(), fusion.concat.cols());
  z.fusion.attention = Matrix::Zero(fusion.attention.rows(), fusion.attention.cols());
  z.fusion.query = Vector::Zero(fusion.query.size());
  return z;
}

Shapes ModelParameters::shapes() const {
  return {static_cast<std::size_t>(region_embeddings.rows()),
          static_cast<std::size_t>(pattern_embeddings.rows()),
          static_cast<std::size_t>(feature_embeddings.rows()),
          static_cast<std::size_t>(text_projection.rows()),
          static_cast<std::size_t>(image_projection.rows())};
}

bool ModelParameters::operator==(const ModelParameters& other) const {
  const auto a = tensors();
  const auto b = other.tensors();
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || a[i].values.rows() != b[i].values.rows() ||
        a[i].values.cols() != b[i].values.cols() || a[i].values != b[i].values) {
      return false;
    }
  }
  return true;
}

ModelParameters init_params(const TrainConfig& cfg, const Shapes& shapes) {
  cfg.validate();
  const auto d = static_cast<Eigen::Index>(cfg.embedding_dim);
  std::mt19937_64 rng(derive_seed(cfg.seed, 10));

  auto uniform = [&](Eigen::Index rows, Eigen::Index cols, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return m;
  };
  auto xavier = [&](Eigen::Index fan_in, Eigen::Index fan_out) {
    if (fan_in == 0) return Matrix(0, fan_out);
    return uniform(fan_in, fan_out, std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
  };

  ModelParameters p;
  p.region_embeddings = uniform(static_cast<Eigen::Index>(shapes.n_regions), d, kEmbeddingInitRange);
  p.feature_embeddings = uniform(static_cast<Eigen::Index>(shapes.n_features), d, kEmbeddingInitRange);
  p.pattern_embeddings = uniform(static_cast<Eigen::Index>(shapes.n_patterns), d, kEmbeddingInitRange);
  for (std::size_t l = 0; l < cfg.layers; ++l) p.aggregation.push_back(xavier(d, d));
  p.text_projection = xavier(static_cast<Eigen::Index>(shapes.text_dim), d);
  p.text_bias = RowVector::Zero(d);
  p.image_projection = xavier(static_cast<Eigen::Index>(shapes.image_dim), d);
  p.image_bias = RowVector::Zero(d);
  const auto concat_rows =
      shapes.text_dim > 0 && shapes.image_dim > 0 ? static_cast<Eigen::Index>(shapes.text_dim + shapes.image_dim) : 0;
  p.fusion.concat = xavier(concat_rows, d);
  p.fusion.attention = xavier(d, d);
  p.fusion.query = xavier(d, 1).col(0);
  return p;
}

void validate_shapes(const ModelParameters& params, const Shapes& shapes, const TrainConfig& cfg) {
  const auto d = static_cast<Eigen::Index>(cfg.embedding_dim);
  auto expect = [](const char* name, Eigen::Index rows, Eigen::Index cols, Eigen::Index want_rows,
                   Eigen::Index want_cols) {
    if (rows != want_rows || cols != want_cols) {
      throw DimensionError(std::string(name) + " is " + shape(rows, cols) + ", expected " +
                           shape(want_rows, want_cols));
    }
  };
  const auto& p = params;
  expect("region_embeddings", p.region_embeddings.rows(), p.region_embeddings.cols(), static_cast<Eigen::Index>(shapes.n_regions), d);
  expect("feature_embeddings", p.feature_embeddings.rows(), p.feature_embeddings.cols(), static_cast<Eigen::Index>(shapes.n_features), d);
  expect("pattern_embeddings", p.pattern_embeddings.rows(), p.pattern_embeddings.cols(), static_cast<Eigen::Index>(shapes.n_patterns), d);
  if (p.aggregation.size() != cfg.layers) {
    throw DimensionError(std::to_string(p.aggregation.size()) + " aggregation matrices, expected " +
                         std::to_string(cfg.layers));
  }
  for (const Matrix& w : p.aggregation) expect("aggregation", w.rows(), w.cols(), d, d);
  expect("text_projection", p.text_projection.rows(), p.text_projection.cols(), static_cast<Eigen::Index>(shapes.text_dim), d);
  expect("text_bias", 1, p.text_bias.size(), 1, d);
  expect("image_projection", p.image_projection.rows(), p.image_projection.cols(), static_cast<Eigen::Index>(shapes.image_dim), d);
  expect("image_bias", 1, p.image_bias.size(), 1, d);
  expect("fusion.attention", p.fusion.attention.rows(), p.fusion.attention.cols(), d, d);
  expect("fusion.query", p.fusion.query.size(), 1, d, 1);
  const Eigen::Index concat_rows = shapes.text_dim > 0 && shapes.image_dim > 0
                                       ? static_cast<Eigen::Index>(shapes.text_dim + shapes.image_dim)
                                       : 0;
  expect("fusion.concat", p.fusion.concat.rows(), p.fusion.concat.cols(), concat_rows, d);
}

std::vector<std::string> active_tensors(const ModelParameters& params, const ModelOptions& options) {
  const VariantSpec& v = options.variant;
  const bool both = v.image && v.text;
  const bool concat = both && options.fusion.method == multimodal::FusionMethod::Concat;
  std::vector<std::string> out{"region_embeddings"};
  if (v.spatial) {
    out.push_back("feature_embeddings");
    for (std::size_t l = 0; l < params.aggregation.size(); ++l) out.push_back("aggregation." + std::to_string(l));
  }
  if ((!v.image && !v.text) || options.add_pattern_id) out.push_back("pattern_embeddings");
  if (v.text && !concat) {
    out.push_back("text_projection");
    out.push_back("text_bias");
  }
  if (v.image && !concat) {
    out.push_back("image_projection");
    out.push_back("image_bias");
  }
  if (concat) out.push_back("fusion.concat");
  if (both && options.fusion.method == multimodal::FusionMethod::Attention) {
    out.push_back("fusion.attention");
    out.push_back("fusion.query");
  }
  return out;
}

// --- forward pass --------------------------------------------------------

namespace {

const Matrix& require_modality(const datamodel::FeatureMatrix* features, const char* name,
                               const ModelParameters& params, const Matrix& projection) {
  if (!features) {
    throw ConfigError(std::string("variant uses ") + name + " features but none were loaded");
  }
  if (features->values.rows() != params.pattern_embeddings.rows()) {
    throw DimensionError(std::string(name) + " features have " +
                         std::to_string(features->values.rows()) + " rows for " +
                         std::to_string(params.pattern_embeddings.rows()) + " patterns");
  }
  if (features->values.cols() != projection.rows()) {
    throw DimensionError(std::string(name) + " features have dim " +
                         std::to_string(features->values.cols()) + ", projection expects " +
                         std::to_string(projection.rows()));
  }
  return features->values;
}

}  // namespace

Representations compute_representations(const ModelParameters& params, const ModelInputs& inputs,
                                        const ModelOptions& options, ForwardTrace* trace) {
  const VariantSpec& v = options.variant;
  v.validate();
  Representations reps;

  if (v.spatial) {
    if (!inputs.graph) throw ConfigError("variant uses spatial features but no knowledge graph was given");
    const kg::KnowledgeGraph& graph = *inputs.graph;
    if (graph.n_regions() != static_cast<std::size_t>(params.region_embeddings.rows()) ||
        graph.n_feature_slots() != static_cast<std::size_t>(params.feature_embeddings.rows())) {
      throw DimensionError("knowledge graph has " + std::to_string(graph.n_regions()) + " regions and " +
                           std::to_string(graph.n_feature_slots()) + " features, parameters have " +
                           std::to_string(params.region_embeddings.rows()) + " and " +
                           std::to_string(params.feature_embeddings.rows()));
    }
    Matrix nodes(params.region_embeddings.rows() + params.feature_embeddings.rows(), params.dim());
    nodes << params.region_embeddings, params.feature_embeddings;
    reps.regions = kg::aggregate_regions(graph, nodes, params.aggregation, kg::Activation::LeakyRelu,
                                         trace ? &trace->aggregation : nullptr);
  } else {
    reps.regions = params.region_embeddings;
  }

  const Matrix* raw_image = v.image ? &require_modality(inputs.image, "image", params, params.image_projection) : nullptr;
  const Matrix* raw_text = v.text ? &require_modality(inputs.text, "text", params, params.text_projection) : nullptr;
  const bool concat = v.image && v.text && options.fusion.method == multimodal::FusionMethod::Concat;

  Matrix image, text;
  if (v.image && !concat) image = multimodal::project_features(*raw_image, params.image_projection, params.image_bias);
  if (v.text && !concat) text = multimodal::project_features(*raw_text, params.text_projection, params.text_bias);

  if (v.image && v.text) {
    reps.patterns = multimodal::fuse(options.fusion, image, text, *raw_image, *raw_text, params.fusion,
                                     trace ? &trace->fusion : nullptr);
  } else if (v.image) {
    reps.patterns = image;
  } else if (v.text) {
    reps.patterns = text;
  } else {
    reps.patterns = params.pattern_embeddings;
  }
  if (options.add_pattern_id && (v.image || v.text)) reps.patterns += params.pattern_embeddings;

  if (trace) {
    trace->image = std::move(image);
    trace->text = std::move(text);
  }
  return reps;
}

Vector score_all(std::uint32_t region, const ModelParameters& params, const ModelInputs& inputs,
                 const ModelOptions& options) {
  const Representations reps = compute_representations(params, inputs, options);
  if (region >= reps.regions.rows()) throw IndexError("score_all: region " + std::to_string(region) + " out of range");
  return reps.patterns * reps.regions.row(region).transpose();
}

// --- objective -----------------------------------------------------------

LossResult loss_and_grads(std::span<const TrainingTriple> batch, const ModelParameters& params,
                          const ModelInputs& inputs, const ModelOptions& options, double l2_coeff,
                          bool want_grads) {
  ForwardTrace trace;
  const Representations reps = compute_representations(params, inputs, options, want_grads ? &trace : nullptr);
  const Eigen::Index n_regions = reps.regions.rows();
  const Eigen::Index n_patterns = reps.patterns.rows();

  LossResult result;
  Matrix grad_regions, grad_patterns;
  if (want_grads) {
    grad_regions = Matrix::Zero(n_regions, reps.regions.cols());
    grad_patterns = Matrix::Zero(n_patterns, reps.patterns.cols());
  }

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const TrainingTriple& t = batch[i];
    if (t.region >= n_regions || t.positive >= n_patterns || t.negative >= n_patterns) {
      throw IndexError("loss_and_grads: batch entry " + std::to_string(i) + " out of range");
    }
    const auto rr = reps.regions.row(t.region);
    const double margin = rr.dot(reps.patterns.row(t.positive) - reps.patterns.row(t.negative));
    const double term = softplus(-margin);
    if (!std::isfinite(term)) {
      throw NumericalError("non-finite loss at batch entry " + std::to_string(i) + " (region " +
                           std::to_string(t.region) + ")");
    }
    result.loss += term;
    if (want_grads) {
      const double c = -sigmoid(-margin);
      grad_regions.row(t.region) += c * (reps.patterns.row(t.positive) - reps.patterns.row(t.negative));
      grad_patterns.row(t.positive) += c * rr;
      grad_patterns.row(t.negative) -= c * rr;
    }
  }

  const std::vector<std::string> active = active_tensors(params, options);
  auto is_active = [&](const std::string& name) {
    return std::find(active.begin(), active.end(), name) != active.end();
  };
  if (l2_coeff > 0.0) {
    for (const ConstTensorView& view : params.tensors()) {
      if (is_active(view.name)) result.loss += l2_coeff * view.values.squaredNorm();
    }
    if (!std::isfinite(result.loss)) throw NumericalError("non-finite regularization term");
  }
  if (!want_grads) return result;

  ModelParameters& g = result.grads = params.zeros_like();
  const VariantSpec& v = options.variant;

  if (v.spatial) {
    Matrix grad_nodes = Matrix::Zero(n_regions + params.feature_embeddings.rows(), params.dim());
    kg::aggregate_regions_backward(*inputs.graph, params.aggregation, trace.aggregation, grad_regions,
                                   grad_nodes, g.aggregation);
    g.region_embeddings += grad_nodes.topRows(n_regions);
    g.feature_embeddings += grad_nodes.bottomRows(params.feature_embeddings.rows());
  } else {
    g.region_embeddings += grad_regions;
  }

  const bool concat = v.image && v.text && options.fusion.method == multimodal::FusionMethod::Concat;
  Matrix grad_image, grad_text;
  if (v.image && v.text) {
    if (!concat) {
      grad_image = Matrix::Zero(n_patterns, params.dim());
      grad_text = Matrix::Zero(n_patterns, params.dim());
    }
    multimodal::fuse_backward(options.fusion, params.fusion, trace.fusion, grad_patterns, grad_image,
                              grad_text, g.fusion);
  } else if (v.image) {
    grad_image = grad_patterns;
  } else if (v.text) {
    grad_text = grad_patterns;
  } else {
    g.pattern_embeddings += grad_patterns;
  }
  if (v.image && !concat) {
    multimodal::project_features_backward(inputs.image->values, grad_image, g.image_projection, g.image_bias);
  }
  if (v.text && !concat) {
    multimodal::project_features_backward(inputs.text->values, grad_text, g.text_projection, g.text_bias);
  }
  if (options.add_pattern_id && (v.image || v.text)) g.pattern_embeddings += grad_patterns;

  if (l2_coeff > 0.0) {
    const auto values = params.tensors();
    auto grads = g.tensors();
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (is_active(values[i].name)) grads[i].values += 2.0 * l2_coeff * values[i].values;
    }
  }
  return result;
}

std::uint32_t sample_negative(const datamodel::PatternSet& positives, std::size_t n_patterns,
                              std::mt19937_64& rng) {
  std::size_t in_range = 0;
  for (const std::uint32_t p : positives) in_range += p < n_patterns ? 1 : 0;
  if (in_range >= n_patterns) throw SamplingError("region interacted with every pattern");
  if (2 * in_range < n_patterns) {
    std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(n_patterns - 1));
    while (true) {
      const std::uint32_t p = pick(rng);
      if (!positives.contains(p)) return p;
    }
  }
  std::vector<std::uint32_t> candidates;
  candidates.reserve(n_patterns - in_range);
  for (std::uint32_t p = 0; p < n_patterns; ++p) {
    if (!positives.contains(p)) candidates.push_back(p);
  }
  std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
  return candidates[pick(rng)];
}

// --- training ------------------------------------------------------------

namespace {

class Adam {
 public:
  Adam(ModelParameters& params, const std::vector<std::string>& active, double learning_rate)
      : learning_rate_(learning_rate) {
    const auto views = params.tensors();
    for (std::size_t i = 0; i < views.size(); ++i) {
      if (std::find(active.begin(), active.end(), views[i].name) == active.end()) continue;
      slots_.push_back(i);
      first_.push_back(Matrix::Zero(views[i].values.rows(), views[i].values.cols()));
      second_.push_back(Matrix::Zero(views[i].values.rows(), views[i].values.cols()));
    }
  }

  void step(ModelParameters& params, const ModelParameters& grads) {
    ++t_;
    const double correction1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(t_));
    const double correction2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(t_));
    auto values = params.tensors();
    const auto g = grads.tensors();
    for (std::size_t j = 0; j < slots_.size(); ++j) {
      const std::size_t i = slots_[j];
      first_[j] = kAdamBeta1 * first_[j] + (1.0 - kAdamBeta1) * g[i].values;
      second_[j] = kAdamBeta2 * second_[j] + (1.0 - kAdamBeta2) * g[i].values.cwiseProduct(g[i].values);
      values[i].values.array() -= learning_rate_ * (first_[j].array() / correction1) /
                                  ((second_[j].array() / correction2).sqrt() + kAdamEpsilon);
    }
  }

 private:
  double learning_rate_;
  std::size_t t_ = 0;
  std::vector<std::size_t> slots_;
  std::vector<Matrix> first_;
  std::vector<Matrix> second_;
};

}  // namespace

TrainResult train(const TrainingData& data, const TrainConfig& cfg, const VariantSpec& variant) {
  cfg.validate();
  variant.validate();
  if (!data.split) throw ConfigError("train: no interaction split");
  const datamodel::InteractionSplit& split = *data.split;
  const ModelOptions options = options_of(cfg, variant);

  TrainResult result;
  result.params = init_params(cfg, data.shapes);
  ModelParameters params = result.params;

  const datamodel::Interactions* train_only[] = {&split.train};
  const bool has_validation = datamodel::count_pairs(split.validation) > 0;
  auto validation_f1 = [&](const ModelParameters& p) {
    if (!has_validation) return 0.0;
    const Representations reps = compute_representations(p, data.inputs, options);
    return eval::evaluate_ranking(reps.regions, reps.patterns, split.validation, train_only, cfg.k).f1_at_k;
  };
  result.initial_validation_f1 = validation_f1(params);
  result.best_validation_f1 = result.initial_validation_f1;
  if (cfg.epochs == 0) return result;

  std::vector<std::pair<std::uint32_t, std::uint32_t>> positives;
  for (const auto& [region, patterns] : split.train) {
    if (patterns.size() >= data.shapes.n_patterns) {
      ++result.skipped_regions;
      continue;
    }
    for (const std::uint32_t p : patterns) positives.emplace_back(region, p);
  }
  if (positives.empty()) throw ConfigError("train: no trainable positive interactions");

  std::mt19937_64 rng(derive_seed(cfg.seed, 20));
  Adam adam(params, active_tensors(params, options), cfg.learning_rate);
  std::vector<TrainingTriple> batch;
  batch.reserve(cfg.batch_size * cfg.negatives_per_positive);
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = positives.size() - 1; i > 0; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i);
      std::swap(positives[i], positives[pick(rng)]);
    }
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < positives.size(); start += cfg.batch_size, ++batch_index) {
      batch.clear();
      const std::size_t end = std::min(positives.size(), start + cfg.batch_size);
      for (std::size_t i = start; i < end; ++i) {
        const auto [region, positive] = positives[i];
        const auto& known = split.train.at(region);
        for (std::size_t n = 0; n < cfg.negatives_per_positive; ++n) {
          batch.push_back({region, positive, sample_negative(known, data.shapes.n_patterns, rng)});
        }
      }
      LossResult step;
      try {
        step = loss_and_grads(batch, params, data.inputs, options, cfg.l2_coeff);
      } catch (const NumericalError& e) {
        throw NumericalError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_index) + ": " + e.what());
      }
      adam.step(params, step.grads);
    }

    if (!has_validation) {
      result.history.push_back(0.0);
      result.params = params;
      result.best_epoch = epoch;
      continue;
    }
    const double f1 = validation_f1(params);
    result.history.push_back(f1);
    if (f1 > result.best_validation_f1) {
      result.best_validation_f1 = f1;
      result.best_epoch = epoch;
      result.params = params;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return result;
}

// --- gradient check ------------------------------------------------------

GradientCheckReport check_gradients(const ModelParameters& params,
                                    std::span<const TrainingTriple> batch,
                                    const ModelInputs& inputs, const ModelOptions& options,
                                    double l2_coeff, const GradientCheckOptions& check) {
  const LossResult analytic = loss_and_grads(batch, params, inputs, options, l2_coeff, true);
  const std::vector<std::string> active = active_tensors(params, options);
  ModelParameters work = params;
  auto views = work.tensors();
  const auto grads = analytic.grads.tensors();
  std::mt19937_64 rng(check.seed);

  GradientCheckReport report;
  for (std::size_t i = 0; i < views.size(); ++i) {
    if (std::find(active.begin(), active.end(), views[i].name) == active.end()) continue;
    const Eigen::Index size = views[i].values.size();
    std::vector<Eigen::Index> coords(static_cast<std::size_t>(size));
    std::iota(coords.begin(), coords.end(), Eigen::Index{0});
    if (coords.size() > check.coordinates_per_tensor) {
      for (std::size_t j = 0; j < check.coordinates_per_tensor; ++j) {
        std::uniform_int_distribution<std::size_t> pick(j, coords.size() - 1);
        std::swap(coords[j], coords[pick(rng)]);
      }
      coords.resize(check.coordinates_per_tensor);
    }

    TensorCheck tc{views[i].name, coords.size(), 0.0, 0.0};
    double* data = views[i].values.data();
    for (const Eigen::Index c : coords) {
      const double original = data[c];
      data[c] = original + check.step;
      const double plus = loss_and_grads(batch, work, inputs, options, l2_coeff, false).loss;
      data[c] = original - check.step;
      const double minus = loss_and_grads(batch, work, inputs, options, l2_coeff, false).loss;
      data[c] = original;
      const double numeric = (plus - minus) / (2.0 * check.step);
      const double exact = grads[i].values.data()[c];
      const double abs_err = std::abs(exact - numeric);
      const double rel_err = abs_err / std::max({std::abs(exact), std::abs(numeric), check.scale_floor});
      tc.max_absolute_error = std::max(tc.max_absolute_error, abs_err);
      tc.max_relative_error = std::max(tc.max_relative_error, rel_err);
    }
    report.max_relative_error = std::max(report.max_relative_error, tc.max_relative_error);
    report.tensors.push_back(std::move(tc));
  }
  return report;
}

// --- checkpoints ---------------------------------------------------------

namespace {

constexpr const char* kCheckpointFormat = "ecorec-checkpoint";
constexpr int kCheckpointVersion = 1;

nlohmann::ordered_json config_to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["embedding_dim"] = c.embedding_dim;
  j["layers"] = c.layers;
  j["learning_rate"] = c.learning_rate;
  j["batch_size"] = c.batch_size;
  j["negatives_per_positive"] = c.negatives_per_positive;
  j["l2_coeff"] = c.l2_coeff;
  j["epochs"] = c.epochs;
  j["patience"] = c.patience;
  j["k"] = c.k;
  j["seed"] = c.seed;
  j["fusion_method"] = multimodal::to_string(c.fusion.method);
  j["gate_direction"] = multimodal::to_string(c.fusion.gate_direction);
  j["add_pattern_id"] = c.add_pattern_id;
  return j;
}

TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.embedding_dim = j.at("embedding_dim").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.negatives_per_positive = j.at("negatives_per_positive").get<std::size_t>();
  c.l2_coeff = j.at("l2_coeff").get<double>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.patience = j.at("patience").get<std::size_t>();
  c.k = j.at("k").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.fusion.method = multimodal::parse_fusion_method(j.at("fusion_method").get<std::string>());
  c.fusion.gate_direction = multimodal::parse_gate_direction(j.at("gate_direction").get<std::string>());
  c.add_pattern_id = j.at("add_pattern_id").get<bool>();
  return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  nlohmann::ordered_json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["config"] = config_to_json(checkpoint.config);
  j["variant"] = checkpoint.variant.name();
  auto& tensors = j["tensors"] = nlohmann::ordered_json::array();
  for (const ConstTensorView& view : checkpoint.params.tensors()) {
    nlohmann::ordered_json t;
    t["name"] = view.name;
    t["rows"] = view.values.rows();
    t["cols"] = view.values.cols();
    t["data"] = std::vector<double>(view.values.data(), view.values.data() + view.values.size());
    tensors.push_back(std::move(t));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": invalid checkpoint: " + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != kCheckpointFormat) throw Error("not a checkpoint file");
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw Error("unsupported checkpoint version " + std::to_string(j.at("version").get<int>()));
    }
    Checkpoint cp;
    cp.config = config_from_json(j.at("config"));
    cp.variant = VariantSpec::parse(j.at("variant").get<std::string>());

    ModelParameters& p = cp.params;
    p.aggregation.resize(cp.config.layers);
    std::set<std::string> seen;
    for (const auto& t : j.at("tensors")) {
      const auto name = t.at("name").get<std::string>();
      const auto rows = t.at("rows").get<Eigen::Index>();
      const auto cols = t.at("cols").get<Eigen::Index>();
      if (name == "region_embeddings") p.region_embeddings.resize(rows, cols);
      else if (name == "feature_embeddings") p.feature_embeddings.resize(rows, cols);
      else if (name == "pattern_embeddings") p.pattern_embeddings.resize(rows, cols);
      else if (name == "text_projection") p.text_projection.resize(rows, cols);
      else if (name == "image_projection") p.image_projection.resize(rows, cols);
      else if (name == "text_bias" && rows == 1) p.text_bias.resize(cols);
      else if (name == "image_bias" && rows == 1) p.image_bias.resize(cols);
      else if (name == "fusion.concat") p.fusion.concat.resize(rows, cols);
      else if (name == "fusion.attention") p.fusion.attention.resize(rows, cols);
      else if (name == "fusion.query" && cols == 1) p.fusion.query.resize(rows);
      else if (name.rfind("aggregation.", 0) == 0) {
        const std::size_t l = std::stoul(name.substr(12));
        if (l >= p.aggregation.size()) throw DimensionError("unexpected tensor " + name);
        p.aggregation[l].resize(rows, cols);
      } else {
        throw DimensionError("unexpected tensor " + name + " (" + shape(rows, cols) + ")");
      }
      seen.insert(name);
    }
    auto views = p.tensors();
    if (seen.size() != views.size()) throw DimensionError("checkpoint is missing tensors");
    for (const auto& t : j.at("tensors")) {
      const auto& data = t.at("data");
      const auto name = t.at("name").get<std::string>();
      auto it = std::find_if(views.begin(), views.end(), [&](const TensorView& v) { return v.name == name; });
      if (static_cast<Eigen::Index>(data.size()) != it->values.size()) {
        throw DimensionError("tensor " + name + " has " + std::to_string(data.size()) + " values");
      }
      for (Eigen::Index c = 0; c < it->values.size(); ++c) it->values.data()[c] = data[static_cast<std::size_t>(c)].get<double>();
    }
    validate_shapes(p, p.shapes(), cp.config);
    return cp;
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": invalid checkpoint: " + e.what());
  }
}

}  // namespace ecorec::model
