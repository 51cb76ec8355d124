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
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "ecorec/datamodel.hpp"
#include "ecorec/kg.hpp"
#include "ecorec/model.hpp"

namespace ecorec::testing {

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("ecorec_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Small random corpus for gradient and forward-pass checks: 6 regions,
// 5 patterns, 8 features, text dim 4, image dim 6.
struct GradientFixture {
  kg::KnowledgeGraph graph;
  datamodel::FeatureMatrix text;
  datamodel::FeatureMatrix image;
  model::Shapes shapes;
  std::vector<model::TrainingTriple> batch;

  explicit GradientFixture(std::uint64_t seed = 7) {
    std::mt19937_64 rng(seed);
    constexpr std::uint32_t kRegions = 6, kPatterns = 5, kFeatures = 8, kRelations = 3;
    std::vector<datamodel::Triple> triples;
    std::bernoulli_distribution link(0.4);
    for (std::uint32_t r = 0; r < kRegions; ++r) {
      for (std::uint32_t f = 0; f < kFeatures; ++f) {
        if (link(rng) || f == r) triples.push_back({r, f % kRelations, f});
      }
    }
    graph = kg::build_graph(kRegions, kFeatures, kRelations, triples);
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto random_matrix = [&](Eigen::Index rows, Eigen::Index cols) {
      Matrix m(rows, cols);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = gauss(rng);
      return m;
    };
    text = {"text", random_matrix(kPatterns, 4)};
    image = {"image", random_matrix(kPatterns, 6)};
    shapes = {kRegions, kPatterns, kFeatures, 4, 6};
    for (std::uint32_t r = 0; r < kRegions; ++r) {
      batch.push_back({r, r % kPatterns, (r + 2) % kPatterns});
      batch.push_back({r, (r + 1) % kPatterns, (r + 3) % kPatterns});
    }
  }

  model::ModelInputs inputs() const { return {&graph, &text, &image}; }

  model::TrainConfig config(multimodal::FusionMethod method = multimodal::FusionMethod::Attention) const {
    model::TrainConfig cfg;
    cfg.embedding_dim = 8;
    cfg.layers = 2;
    cfg.seed = 3;
    cfg.fusion.method = method;
    return cfg;
  }

  // Parameters scaled up from the default init so that every nonlinearity
  // operates away from its linear regime.
  model::ModelParameters params(const model::TrainConfig& cfg) const {
    model::ModelParameters p = model::init_params(cfg, shapes);
    p.region_embeddings *= 5.0;
    p.feature_embeddings *= 5.0;
    p.pattern_embeddings *= 5.0;
    p.text_bias.setConstant(0.1);
    p.image_bias.setConstant(-0.1);
    return p;
  }
};

// Purely linear sub-model over the same graph: no aggregation layers, Sum
// fusion, no L2 and identity projections, so raw feature dims equal d = 8.
struct LinearFixture {
  GradientFixture base;
  datamodel::FeatureMatrix text;
  datamodel::FeatureMatrix image;
  model::TrainConfig cfg;
  model::ModelParameters params;

  LinearFixture() {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto random_matrix = [&](Eigen::Index rows, Eigen::Index cols) {
      Matrix m(rows, cols);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = gauss(rng);
      return m;
    };
    text = {"text", random_matrix(5, 8)};
    image = {"image", random_matrix(5, 8)};
    cfg = base.config(multimodal::FusionMethod::Sum);
    cfg.layers = 0;
    cfg.l2_coeff = 0.0;
    params = model::init_params(cfg, {6, 5, 8, 8, 8});
    params.text_projection = Matrix::Identity(8, 8);
    params.image_projection = Matrix::Identity(8, 8);
  }

  model::ModelInputs inputs() const { return {&base.graph, &text, &image}; }
};

}  // namespace ecorec::testing
