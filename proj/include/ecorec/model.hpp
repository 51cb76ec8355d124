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
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "ecorec/datamodel.hpp"
#include "ecorec/kg.hpp"
#include "ecorec/linalg.hpp"
#include "ecorec/multimodal.hpp"

namespace ecorec::model {

// Which inputs a model variant uses: spatial (KG) region representations,
// image features, text features.
struct VariantSpec {
  bool spatial = true;
  bool image = true;
  bool text = true;

  // "S", "I", "T", "SI", "ST", "IT" or "SIT".
  std::string name() const;
  static VariantSpec parse(std::string_view name);
  void validate() const;

  bool operator==(const VariantSpec&) const = default;
};

// The seven variants in reporting order: S, I, T, SI, ST, IT, SIT.
std::vector<VariantSpec> all_variants();

struct TrainConfig {
  std::size_t embedding_dim = 64;
  std::size_t layers = 3;
  double learning_rate = 1e-3;
  std::size_t batch_size = 128;
  std::size_t negatives_per_positive = 1;
  double l2_coeff = 1e-4;
  std::size_t epochs = 200;
  std::size_t patience = 10;
  std::size_t k = 5;
  std::uint64_t seed = 0;
  multimodal::FusionConfig fusion;
  // Add a learned pattern ID embedding on top of the fused representation.
  bool add_pattern_id = false;

  void validate() const;
};

struct Shapes {
  std::size_t n_regions = 0;
  std::size_t n_patterns = 0;
  std::size_t n_features = 0;
  std::size_t text_dim = 0;   // 0 when no text features are loaded
  std::size_t image_dim = 0;  // 0 when no image features are loaded
};

// Flat view of one parameter tensor (column-major storage).
struct TensorView {
  std::string name;
  Eigen::Map<Matrix> values;
};

struct ConstTensorView {
  std::string name;
  Eigen::Map<const Matrix> values;
};

struct ModelParameters {
  Matrix region_embeddings;   // |R| x d
  Matrix feature_embeddings;  // |F| x d
  Matrix pattern_embeddings;  // |P| x d
  std::vector<Matrix> aggregation;  // L matrices, d x d
  Matrix text_projection;     // D_text x d
  RowVector text_bias;        // d
  Matrix image_projection;    // D_image x d
  RowVector image_bias;       // d
  multimodal::FusionWeights fusion;

  std::vector<TensorView> tensors();
  std::vector<ConstTensorView> tensors() const;
  ModelParameters zeros_like() const;
  Eigen::Index dim() const { return region_embeddings.cols(); }
  Shapes shapes() const;

  bool operator==(const ModelParameters& other) const;
};

// Xavier-uniform weights, U(-0.1, 0.1) embeddings, zero biases.
ModelParameters init_params(const TrainConfig& cfg, const Shapes& shapes);

// Throws DimensionError unless `params` matches `shapes` and `cfg`.
void validate_shapes(const ModelParameters& params, const Shapes& shapes, const TrainConfig& cfg);

// Read-only inputs a forward pass may consult. Variants only dereference the
// members they need.
struct ModelInputs {
  const kg::KnowledgeGraph* graph = nullptr;
  const datamodel::FeatureMatrix* text = nullptr;
  const datamodel::FeatureMatrix* image = nullptr;
};

struct ModelOptions {
  VariantSpec variant;
  multimodal::FusionConfig fusion;
  bool add_pattern_id = false;
};

ModelOptions options_of(const TrainConfig& cfg, const VariantSpec& variant);

// Names of the tensors the forward pass reads under `options`.
std::vector<std::string> active_tensors(const ModelParameters& params, const ModelOptions& options);

struct Representations {
  Matrix regions;   // RR, |R| x d
  Matrix patterns;  // PR, |P| x d
};

struct ForwardTrace {
  kg::AggregationTrace aggregation;
  multimodal::FusionTrace fusion;
  Matrix image;  // projected image features
  Matrix text;   // projected text features
};

// Throws ConfigError when the variant needs an input that is absent.
Representations compute_representations(const ModelParameters& params, const ModelInputs& inputs,
                                        const ModelOptions& options,
                                        ForwardTrace* trace = nullptr);

// Scores of every pattern for one region: RR_r . PR_p.
Vector score_all(std::uint32_t region, const ModelParameters& params, const ModelInputs& inputs,
                 const ModelOptions& options);

struct TrainingTriple {
  std::uint32_t region = 0;
  std::uint32_t positive = 0;
  std::uint32_t negative = 0;
};

struct LossResult {
  double loss = 0.0;
  ModelParameters grads;  // empty tensors when gradients were not requested
};

// loss = -sum ln sigmoid(S(r,p+) - S(r,p-)) + l2 * ||active params||^2 and its
// exact gradient. Throws NumericalError naming the first non-finite term.
LossResult loss_and_grads(std::span<const TrainingTriple> batch, const ModelParameters& params,
                          const ModelInputs& inputs, const ModelOptions& options, double l2_coeff,
                          bool want_grads = true);

// Uniform over patterns the region has no train positive with. Throws
// SamplingError when the region interacted with every pattern.
std::uint32_t sample_negative(const datamodel::PatternSet& positives, std::size_t n_patterns,
                              std::mt19937_64& rng);

struct TrainingData {
  ModelInputs inputs;
  const datamodel::InteractionSplit* split = nullptr;
  Shapes shapes;
};

struct TrainResult {
  ModelParameters params;  // best-validation parameters
  double initial_validation_f1 = 0.0;
  std::vector<double> history;  // validation F1@k after each epoch
  std::size_t best_epoch = 0;   // 0 = initial parameters
  double best_validation_f1 = 0.0;
  std::size_t skipped_regions = 0;  // regions with no negative to sample
};

// Adam over shuffled positive batches, early stopping on validation F1@k.
TrainResult train(const TrainingData& data, const TrainConfig& cfg, const VariantSpec& variant);

struct TensorCheck {
  std::string name;
  std::size_t coordinates = 0;
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
};

struct GradientCheckReport {
  double max_relative_error = 0.0;
  std::vector<TensorCheck> tensors;
};

struct GradientCheckOptions {
  double step = 1e-4;
  std::size_t coordinates_per_tensor = 200;
  // Denominator floor: |a - n| / max(|a|, |n|, floor).
  double scale_floor = 1e-6;
  std::uint64_t seed = 0;
};

// Central differences (f(x+h) - f(x-h)) / 2h on up to
// `coordinates_per_tensor` random coordinates of every active tensor.
GradientCheckReport check_gradients(const ModelParameters& params,
                                    std::span<const TrainingTriple> batch,
                                    const ModelInputs& inputs, const ModelOptions& options,
                                    double l2_coeff, const GradientCheckOptions& check = {});

struct Checkpoint {
  ModelParameters params;
  TrainConfig config;
  VariantSpec variant;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ecorec::model
