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

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "ecorec/error.hpp"
#include "ecorec/model.hpp"
#include "fixtures.hpp"

namespace ecorec::model {
namespace {

using multimodal::FusionMethod;
using testing::GradientFixture;
using testing::LinearFixture;
using testing::TempDir;

constexpr FusionMethod kMethods[] = {FusionMethod::Sum, FusionMethod::Concat, FusionMethod::Gated,
                                     FusionMethod::Attention};

TEST(Variant, NamesAndParsing) {
  const auto all = all_variants();
  ASSERT_EQ(all.size(), 7u);
  const char* names[] = {"S", "I", "T", "SI", "ST", "IT", "SIT"};
  for (std::size_t i = 0; i < all.size(); ++i) {
    EXPECT_EQ(all[i].name(), names[i]);
    EXPECT_EQ(VariantSpec::parse(names[i]), all[i]);
  }
  EXPECT_THROW(VariantSpec::parse(""), ConfigError);
  EXPECT_THROW(VariantSpec::parse("SS"), ConfigError);
  EXPECT_THROW(VariantSpec::parse("X"), ConfigError);
}

TEST(Init, DeterministicAndShaped) {
  TrainConfig cfg;
  const Shapes shapes{10, 6, 12, 768, 2048};
  const ModelParameters a = init_params(cfg, shapes);
  EXPECT_TRUE(a == init_params(cfg, shapes));
  EXPECT_EQ(a.region_embeddings.cols(), 64);
  EXPECT_EQ(a.aggregation.size(), 3u);
  EXPECT_EQ(a.fusion.concat.rows(), 2816);
  EXPECT_EQ(a.text_bias, RowVector::Zero(64));
  EXPECT_LE(a.region_embeddings.cwiseAbs().maxCoeff(), 0.1);
  validate_shapes(a, shapes, cfg);
  cfg.seed = 1;
  EXPECT_FALSE(a == init_params(cfg, shapes));
}

TEST(Init, XavierBound) {
  TrainConfig cfg;
  const ModelParameters p = init_params(cfg, {2, 2, 2, 768, 8});
  const double bound = std::sqrt(6.0 / 832.0);
  EXPECT_LE(p.text_projection.cwiseAbs().maxCoeff(), bound);
  EXPECT_GT(p.text_projection.cwiseAbs().maxCoeff(), 0.99 * bound);  // 49k draws fill the range
}

TEST(Init, ShapeValidation) {
  TrainConfig cfg;
  cfg.embedding_dim = 4;
  ModelParameters p = init_params(cfg, {3, 3, 3, 2, 2});
  p.image_projection.resize(3, 4);
  EXPECT_THROW(validate_shapes(p, {3, 3, 3, 2, 2}, cfg), DimensionError);
}

// S variant, no layers, pattern ID embeddings: scores are plain dot products.
struct HandScores {
  TrainConfig cfg;
  ModelParameters params;
  ModelOptions options;
  HandScores() {
    cfg.embedding_dim = 2;
    cfg.layers = 0;
    params = init_params(cfg, {1, 2, 0, 0, 0});
    options = options_of(cfg, VariantSpec::parse("S"));
  }
  Vector scores() {
    const kg::KnowledgeGraph g = kg::build_graph(1, 0, 0, {});
    return score_all(0, params, {&g, nullptr, nullptr}, options);
  }
};

TEST(Score, HandInnerProducts) {
  HandScores h;
  h.params.region_embeddings << 1, 1;
  h.params.pattern_embeddings << 1, 0, 0, 2;
  const Vector s = h.scores();
  EXPECT_EQ(s(0), 1.0);
  EXPECT_EQ(s(1), 2.0);
}

TEST(Score, ZeroAndOrthogonalRegions) {
  HandScores h;
  h.params.region_embeddings.setZero();
  EXPECT_EQ(h.scores(), Vector::Zero(2));
  h.params.region_embeddings << 1, -1;
  h.params.pattern_embeddings << 3, 3, -2, -2;
  EXPECT_EQ(h.scores(), Vector::Zero(2));
}

TEST(Score, MissingModalityIsConfigError) {
  GradientFixture fx;
  const TrainConfig cfg = fx.config();
  const ModelParameters p = fx.params(cfg);
  EXPECT_THROW(score_all(0, p, {&fx.graph, nullptr, &fx.image}, options_of(cfg, VariantSpec::parse("SIT"))),
               ConfigError);
  EXPECT_THROW(score_all(0, p, {nullptr, &fx.text, &fx.image}, options_of(cfg, VariantSpec::parse("S"))),
               ConfigError);
}

TEST(Score, VariantsReadOnlyWhatTheyNeed) {
  GradientFixture fx;
  const TrainConfig cfg = fx.config();
  const ModelParameters p = fx.params(cfg);
  // S never reads features; I never touches the graph; T neither graph nor image.
  const Vector s = score_all(1, p, {&fx.graph, nullptr, nullptr}, options_of(cfg, VariantSpec::parse("S")));
  EXPECT_EQ(s, score_all(1, p, fx.inputs(), options_of(cfg, VariantSpec::parse("S"))));
  const Vector i = score_all(1, p, {nullptr, nullptr, &fx.image}, options_of(cfg, VariantSpec::parse("I")));
  EXPECT_EQ(i, score_all(1, p, fx.inputs(), options_of(cfg, VariantSpec::parse("I"))));
  const Vector t = score_all(1, p, {nullptr, &fx.text, nullptr}, options_of(cfg, VariantSpec::parse("T")));
  EXPECT_EQ(t, score_all(1, p, fx.inputs(), options_of(cfg, VariantSpec::parse("T"))));
}

TEST(Score, AddPatternIdAddsEmbedding) {
  GradientFixture fx;
  TrainConfig cfg = fx.config(FusionMethod::Sum);
  const ModelParameters p = fx.params(cfg);
  const Representations plain = compute_representations(p, fx.inputs(), options_of(cfg, VariantSpec::parse("SIT")));
  cfg.add_pattern_id = true;
  const Representations with_id = compute_representations(p, fx.inputs(), options_of(cfg, VariantSpec::parse("SIT")));
  EXPECT_LT((with_id.patterns - plain.patterns - p.pattern_embeddings).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Loss, EqualScoresGiveBatchLn2) {
  GradientFixture fx;
  const TrainConfig cfg = fx.config();
  const ModelParameters p = fx.params(cfg);
  std::vector<TrainingTriple> batch;
  for (std::uint32_t r = 0; r < 6; ++r) batch.push_back({r, r % 5, r % 5});
  const LossResult res = loss_and_grads(batch, p, fx.inputs(), options_of(cfg, VariantSpec{}), 0.0);
  EXPECT_NEAR(res.loss, 6 * std::log(2.0), 1e-12);
}

TEST(Loss, SaturationLeavesRegularizerOnly) {
  HandScores h;
  h.params.region_embeddings << 1e4, 0;
  h.params.pattern_embeddings << 1, 0, -1, 0;
  const kg::KnowledgeGraph g = kg::build_graph(1, 0, 0, {});
  const std::vector<TrainingTriple> batch{{0, 0, 1}};
  const double l2 = 1e-3;
  const LossResult res = loss_and_grads(batch, h.params, {&g, nullptr, nullptr}, h.options, l2);
  const double reg = l2 * (h.params.region_embeddings.squaredNorm() + h.params.pattern_embeddings.squaredNorm());
  EXPECT_NEAR(res.loss, reg, 1e-9 * reg);
}

TEST(Loss, NonFiniteScoreIsNumericalError) {
  HandScores h;
  h.params.region_embeddings << std::nan(""), 0;
  const kg::KnowledgeGraph g = kg::build_graph(1, 0, 0, {});
  const std::vector<TrainingTriple> batch{{0, 0, 1}};
  try {
    loss_and_grads(batch, h.params, {&g, nullptr, nullptr}, h.options, 0.0);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("batch entry 0"), std::string::npos) << e.what();
  }
}

TEST(Loss, L2StepShrinksNormsWithoutRankingSignal) {
  GradientFixture fx;
  const TrainConfig cfg = fx.config();
  for (const VariantSpec& v : all_variants()) {
    const ModelOptions opt = options_of(cfg, v);
    ModelParameters p = fx.params(cfg);
    std::vector<TrainingTriple> batch;
    for (std::uint32_t r = 0; r < 6; ++r) batch.push_back({r, r % 5, r % 5});
    const LossResult res = loss_and_grads(batch, p, fx.inputs(), opt, 0.01);
    std::map<std::string, double> before;
    for (const auto& t : std::as_const(p).tensors()) before[t.name] = t.values.norm();
    auto values = p.tensors();
    const auto grads = res.grads.tensors();
    for (std::size_t i = 0; i < values.size(); ++i) values[i].values -= 0.1 * grads[i].values;
    for (const auto& t : std::as_const(p).tensors()) EXPECT_LE(t.values.norm(), before[t.name]) << t.name;
  }
}

TEST(GradientCheck, EveryVariantAndFusionMethod) {
  GradientFixture fx;
  for (const FusionMethod method : kMethods) {
    const TrainConfig cfg = fx.config(method);
    const ModelParameters p = fx.params(cfg);
    for (const VariantSpec& v : all_variants()) {
      const GradientCheckReport rep =
          check_gradients(p, fx.batch, fx.inputs(), options_of(cfg, v), cfg.l2_coeff);
      EXPECT_LT(rep.max_relative_error, 1e-4) << v.name() << " " << multimodal::to_string(method);
      EXPECT_EQ(rep.tensors.size(), active_tensors(p, options_of(cfg, v)).size());
    }
  }
}

TEST(GradientCheck, SwappedGateAndPatternId) {
  GradientFixture fx;
  TrainConfig cfg = fx.config(FusionMethod::Gated);
  cfg.fusion.gate_direction = multimodal::GateDirection::TextGatesImage;
  cfg.add_pattern_id = true;
  const ModelParameters p = fx.params(cfg);
  for (const VariantSpec& v : all_variants()) {
    EXPECT_LT(check_gradients(p, fx.batch, fx.inputs(), options_of(cfg, v), cfg.l2_coeff).max_relative_error, 1e-4)
        << v.name();
  }
}

TEST(GradientCheck, LinearSubModelMatchesExtrapolatedDifferences) {
  // The pairwise loss is not quadratic, so plain central differences carry
  // an O(h^2) term even here; Richardson extrapolation removes it.
  LinearFixture lin;
  const double h = 1e-3;
  for (const VariantSpec& v : all_variants()) {
    const ModelOptions opt = options_of(lin.cfg, v);
    const LossResult exact = loss_and_grads(lin.base.batch, lin.params, lin.inputs(), opt, 0.0);
    const auto active = active_tensors(lin.params, opt);
    const auto grads = exact.grads.tensors();
    ModelParameters work = lin.params;
    auto views = work.tensors();
    auto loss = [&] { return loss_and_grads(lin.base.batch, work, lin.inputs(), opt, 0.0, false).loss; };
    for (std::size_t t = 0; t < views.size(); ++t) {
      if (std::find(active.begin(), active.end(), views[t].name) == active.end()) continue;
      double* x = views[t].values.data();
      for (Eigen::Index c = 0; c < views[t].values.size(); ++c) {
        const double keep = x[c];
        auto diff = [&](double step) {
          x[c] = keep + step;
          const double plus = loss();
          x[c] = keep - step;
          const double minus = loss();
          x[c] = keep;
          return (plus - minus) / (2 * step);
        };
        const double extrapolated = (4 * diff(h / 2) - diff(h)) / 3;
        const double a = grads[t].values.data()[c];
        EXPECT_NEAR(a, extrapolated, 1e-9 + 1e-8 * std::abs(a)) << v.name() << " " << views[t].name << " " << c;
      }
    }
    GradientCheckOptions plain;
    EXPECT_LT(check_gradients(lin.params, lin.base.batch, lin.inputs(), opt, 0.0, plain).max_relative_error, 1e-6)
        << v.name();
  }
}

TEST(GradientCheck, TinyStepIsReportedNotAsserted) {
  GradientFixture fx;
  const TrainConfig cfg = fx.config();
  const ModelParameters p = fx.params(cfg);
  GradientCheckOptions tiny;
  tiny.step = 1e-12;
  const auto normal = check_gradients(p, fx.batch, fx.inputs(), options_of(cfg, VariantSpec{}), cfg.l2_coeff);
  const auto noisy = check_gradients(p, fx.batch, fx.inputs(), options_of(cfg, VariantSpec{}), cfg.l2_coeff, tiny);
  EXPECT_GT(noisy.max_relative_error, 10 * normal.max_relative_error);
}

TEST(GradientCheck, SubsamplesLargeTensors) {
  TrainConfig cfg;
  cfg.embedding_dim = 8;
  cfg.layers = 1;
  GradientFixture fx;
  const ModelParameters p = init_params(cfg, fx.shapes);
  GradientCheckOptions opt;
  opt.coordinates_per_tensor = 5;
  const auto rep = check_gradients(p, fx.batch, fx.inputs(), options_of(cfg, VariantSpec{}), 0.0, opt);
  for (const TensorCheck& t : rep.tensors) EXPECT_LE(t.coordinates, 5u);
}

TEST(Sampling, ForcedChoice) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_negative({0}, 2, rng), 1u);
}

TEST(Sampling, UniformOverNonPositives) {
  for (const datamodel::PatternSet& positives :
       {datamodel::PatternSet{1, 4, 6}, datamodel::PatternSet{0, 1, 2, 3, 5, 6, 8}}) {
    std::mt19937_64 rng(2);
    const std::size_t n = 10, draws = 100000;
    std::vector<std::size_t> counts(n, 0);
    for (std::size_t i = 0; i < draws; ++i) ++counts[sample_negative(positives, n, rng)];
    const double expected = 1.0 / static_cast<double>(n - positives.size());
    for (std::uint32_t p = 0; p < n; ++p) {
      const double freq = static_cast<double>(counts[p]) / draws;
      if (positives.contains(p)) {
        EXPECT_EQ(counts[p], 0u);
      } else {
        EXPECT_NEAR(freq, expected, 0.02 * expected) << p;
      }
    }
  }
}

TEST(Sampling, SeededSequenceRepeats) {
  std::mt19937_64 a(9), b(9);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sample_negative({2, 3}, 12, a), sample_negative({2, 3}, 12, b));
}

TEST(Sampling, SaturatedRegionIsSamplingError) {
  std::mt19937_64 rng(3);
  EXPECT_THROW(sample_negative({0, 1, 2}, 3, rng), SamplingError);
}

// Small clustered training problem over the gradient fixture's graph.
struct TinyProblem {
  GradientFixture fx;
  datamodel::InteractionSplit split;
  TinyProblem() {
    for (std::uint32_t r = 0; r < 6; ++r) {
      split.train[r] = {r % 5, (r + 1) % 5};
      split.validation[r] = {(r + 2) % 5};
    }
  }
  TrainingData data() const { return {fx.inputs(), &split, fx.shapes}; }
  TrainConfig cfg() const {
    TrainConfig c = fx.config();
    c.epochs = 30;
    c.batch_size = 4;
    c.k = 2;
    c.learning_rate = 0.05;
    return c;
  }
};

TEST(Train, ZeroEpochsReturnsInitialParameters) {
  TinyProblem t;
  TrainConfig cfg = t.cfg();
  cfg.epochs = 0;
  const TrainResult res = train(t.data(), cfg, VariantSpec{});
  EXPECT_TRUE(res.params == init_params(cfg, t.fx.shapes));
  EXPECT_TRUE(res.history.empty());
  EXPECT_EQ(res.best_epoch, 0u);
}

TEST(Train, DeterministicPerSeed) {
  TinyProblem t;
  for (const VariantSpec& v : all_variants()) {
    const TrainResult a = train(t.data(), t.cfg(), v);
    const TrainResult b = train(t.data(), t.cfg(), v);
    EXPECT_TRUE(a.params == b.params) << v.name();
    EXPECT_EQ(a.history, b.history);
  }
}

TEST(Train, EarlyStoppingKeepsBestEpoch) {
  TinyProblem t;
  TrainConfig cfg = t.cfg();
  cfg.patience = 3;
  cfg.epochs = 100;
  const TrainResult res = train(t.data(), cfg, VariantSpec{});
  ASSERT_FALSE(res.history.empty());
  double best = res.initial_validation_f1;
  for (double f : res.history) best = std::max(best, f);
  EXPECT_EQ(res.best_validation_f1, best);
  if (res.best_epoch > 0) EXPECT_EQ(res.history[res.best_epoch - 1], best);
  EXPECT_LE(res.history.size(), res.best_epoch + cfg.patience);
}

TEST(Train, SaturatedRegionsAreSkipped) {
  TinyProblem t;
  t.split.train[0] = {0, 1, 2, 3, 4};
  t.split.validation.erase(0);
  const TrainResult res = train(t.data(), t.cfg(), VariantSpec{});
  EXPECT_EQ(res.skipped_regions, 1u);
}

TEST(Checkpoint, RoundTripIsLossless) {
  GradientFixture fx;
  TrainConfig cfg = fx.config(FusionMethod::Gated);
  cfg.fusion.gate_direction = multimodal::GateDirection::TextGatesImage;
  cfg.add_pattern_id = true;
  cfg.learning_rate = 0.0123;
  cfg.seed = 99;
  const Checkpoint cp{fx.params(cfg), cfg, VariantSpec::parse("ST")};
  TempDir dir("checkpoint");
  save_checkpoint(dir / "c.json", cp);
  const Checkpoint back = load_checkpoint(dir / "c.json");
  EXPECT_TRUE(back.params == cp.params);
  EXPECT_EQ(back.variant, cp.variant);
  EXPECT_EQ(back.config.learning_rate, 0.0123);
  EXPECT_EQ(back.config.seed, 99u);
  EXPECT_EQ(back.config.layers, cfg.layers);
  EXPECT_EQ(back.config.fusion.method, FusionMethod::Gated);
  EXPECT_EQ(back.config.fusion.gate_direction, multimodal::GateDirection::TextGatesImage);
  EXPECT_TRUE(back.config.add_pattern_id);
}

TEST(Checkpoint, RejectsGarbageAndShapeDamage) {
  TempDir dir("checkpoint_bad");
  testing::write_file(dir / "a.json", "not json");
  EXPECT_THROW(load_checkpoint(dir / "a.json"), Error);
  testing::write_file(dir / "b.json", R"({"format":"other","version":1})");
  EXPECT_THROW(load_checkpoint(dir / "b.json"), Error);

  GradientFixture fx;
  const TrainConfig cfg = fx.config();
  Checkpoint cp{fx.params(cfg), cfg, VariantSpec{}};
  cp.params.aggregation.pop_back();
  save_checkpoint(dir / "c.json", cp);
  EXPECT_THROW(load_checkpoint(dir / "c.json"), DimensionError);
}

}  // namespace
}  // namespace ecorec::model
