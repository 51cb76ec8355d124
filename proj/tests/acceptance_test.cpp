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

// Acceptance suite: prints one PASS/FAIL line per criterion (with indented
// detail lines) and exits non-zero if any criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ecorec/experiment.hpp"
#include "ecorec/kg.hpp"
#include "ecorec/model.hpp"
#include "ecorec/multimodal.hpp"
#include "ecorec/ranking.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

namespace {

using namespace ecorec;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), format, a, b, c);
  return buf;
}

class Report {
 public:
  void add(const std::string& name, bool pass, const std::vector<std::string>& details) {
    std::cout << (pass ? "PASS  " : "FAIL  ") << name << "\n";
    for (const auto& d : details) std::cout << "      " << d << "\n";
    std::cout.flush();
    failures_ += pass ? 0 : 1;
  }
  int failures() const { return failures_; }

 private:
  int failures_ = 0;
};

// --- gradient exactness ---------------------------------------------------

void gradient_exactness(Report& report) {
  const auto start = Clock::now();
  std::vector<std::string> details;
  bool pass = true;

  testing::GradientFixture fx;
  double worst_full = 0.0;
  std::string worst_full_at;
  for (auto method : {multimodal::FusionMethod::Sum, multimodal::FusionMethod::Concat,
                      multimodal::FusionMethod::Gated, multimodal::FusionMethod::Attention}) {
    const model::TrainConfig cfg = fx.config(method);
    const model::ModelParameters params = fx.params(cfg);
    for (const auto& v : model::all_variants()) {
      const double err = model::check_gradients(params, fx.batch, fx.inputs(), model::options_of(cfg, v),
                                                cfg.l2_coeff).max_relative_error;
      if (err >= worst_full) {
        worst_full = err;
        worst_full_at = v.name() + "/" + multimodal::to_string(method);
      }
    }
  }
  const bool full_ok = worst_full < 1e-4;
  pass &= full_ok;
  details.push_back(fmt("full model, 7 variants x 4 fusion methods, h=1e-4: max rel err %.3g (< 1e-4)", worst_full) +
                    " at " + worst_full_at + (full_ok ? "" : "  <-- over bound"));

  testing::LinearFixture lin;
  std::string linear_line = "linear sub-model (layers=0, sum, l2=0, identity projections), h=1e-4:";
  bool linear_ok = true;
  for (const auto& v : model::all_variants()) {
    const double err = model::check_gradients(lin.params, lin.base.batch, lin.inputs(),
                                              model::options_of(lin.cfg, v), 0.0).max_relative_error;
    linear_ok &= err < 1e-8;
    linear_line += " " + v.name() + "=" + fmt("%.2g", err);
  }
  pass &= linear_ok;
  details.push_back(linear_line + (linear_ok ? "  (all < 1e-8)" : "  <-- bound 1e-8 not met"));

  const double elapsed = seconds_since(start);
  pass &= elapsed < 30.0;
  details.push_back(fmt("runtime %.2f s (< 30 s)", elapsed));
  report.add("gradient exactness", pass, details);
}

// --- metrics ----------------------------------------------------------------

void metric_oracle(Report& report) {
  std::mt19937_64 rng(20260101);
  double worst = 0.0;
  std::size_t mismatched_tp = 0;
  for (int i = 0; i < 1000; ++i) {
    const testing::MetricInstance inst = testing::random_metric_instance(rng);
    const auto top = eval::rank_topk(inst.scores, inst.k, inst.exclusions);
    const eval::TopKMetrics m =
        eval::metrics_at_k(top, datamodel::PatternSet(inst.relevant.begin(), inst.relevant.end()), inst.k);
    const testing::OracleMetrics o = testing::brute_force_metrics(top, inst.relevant);
    mismatched_tp += m.true_positives != o.tp;
    worst = std::max({worst, std::abs(m.precision - o.precision), std::abs(m.recall - o.recall),
                      std::abs(m.f1 - o.f1)});
  }
  const bool pass = worst <= 1e-12 && mismatched_tp == 0;
  report.add("metric oracle equivalence", pass,
             {fmt("1000 instances (|P| <= 20, K <= 10): max |diff| %.3g (<= 1e-12), TP mismatches %.0f",
                  worst, static_cast<double>(mismatched_tp))});
}

void closed_form_metrics(Report& report) {
  const std::vector<std::uint32_t> perfect{3, 1, 4, 0, 2};
  const eval::TopKMetrics a = eval::metrics_at_k(perfect, {0, 1, 2, 3, 4}, 5);
  const std::vector<std::uint32_t> partial{0, 1, 7, 8, 9};
  const eval::TopKMetrics b = eval::metrics_at_k(partial, {0, 1, 2, 3}, 5);
  const double f1 = 2 * 0.4 * 0.5 / 0.9;
  const bool perfect_ok = std::abs(a.precision - 1) <= 1e-9 && std::abs(a.recall - 1) <= 1e-9 &&
                          std::abs(a.f1 - 1) <= 1e-9;
  const bool hand_ok = std::abs(b.precision - 0.4) <= 1e-9 && std::abs(b.recall - 0.5) <= 1e-9 &&
                       std::abs(b.f1 - f1) <= 1e-9;
  report.add("closed-form metric checks", perfect_ok && hand_ok,
             {fmt("perfect ranking: (%.6f, %.6f, %.6f)", a.precision, a.recall, a.f1),
              fmt("K=5, TP=2, |relevant|=4: precision %.6f recall %.6f", b.precision, b.recall) +
                  fmt(" F1 %.6f (expected %.6f)", b.f1, f1)});
}

// --- planted structure ------------------------------------------------------

struct SeedRuns {
  double random_recall = 0.0;
  eval::RunResult sit, s, t;
};

eval::PreparedData planted(std::uint64_t seed) {
  datamodel::GenConfig gen;  // 200 regions, 40 patterns, 4 clusters, p_in .5, p_out .02, dims 32/64, noise .1
  gen.seed = seed;
  return eval::prepare(datamodel::gen_synthetic(gen).dataset, 2, seed);
}

model::TrainConfig paper_config(std::uint64_t seed) {
  model::TrainConfig cfg;  // d=64, L=3, lr=1e-3, batch=128, K=5
  cfg.seed = seed;
  return cfg;
}

void planted_learning(Report& report, std::vector<SeedRuns>& runs) {
  const auto start = Clock::now();
  std::vector<std::string> details;
  double recall_sum = 0.0, random_sum = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const eval::PreparedData data = planted(seed);
    const datamodel::Interactions* excluded[] = {&data.split.train, &data.split.validation};
    SeedRuns r;
    r.random_recall = eval::random_recall_expectation(data.split.test, excluded, data.dataset.n_patterns(), 5);
    r.sit = eval::train_and_evaluate(data, paper_config(seed), model::VariantSpec{});
    recall_sum += r.sit.report.recall_at_k;
    random_sum += r.random_recall;
    details.push_back(fmt("seed %.0f: SIT Recall@5 %.4f, random expectation %.4f", static_cast<double>(seed),
                          r.sit.report.recall_at_k, r.random_recall));
    runs.push_back(std::move(r));
  }
  const double mean_recall = recall_sum / 5, mean_random = random_sum / 5;
  const double elapsed = seconds_since(start);
  const bool pass = mean_recall >= 3 * mean_random && elapsed < 180.0;
  details.push_back(fmt("mean Recall@5 %.4f vs 3 x random %.4f (ratio %.2f)", mean_recall, 3 * mean_random,
                        mean_recall / mean_random));
  details.push_back(fmt("runtime %.1f s (< 180 s)", elapsed));
  report.add("planted-structure learning", pass, details);
}

void ablation_trend(Report& report, std::vector<SeedRuns>& runs) {
  std::vector<std::string> details;
  int holds = 0;
  for (std::uint64_t seed = 0; seed < runs.size(); ++seed) {
    const eval::PreparedData data = planted(seed);
    SeedRuns& r = runs[seed];
    r.s = eval::train_and_evaluate(data, paper_config(seed), model::VariantSpec::parse("S"));
    r.t = eval::train_and_evaluate(data, paper_config(seed), model::VariantSpec::parse("T"));
    const double sit = r.sit.report.f1_at_k, s = r.s.report.f1_at_k, t = r.t.report.f1_at_k;
    const bool ok = sit >= s && sit >= t;
    holds += ok;
    details.push_back(fmt("seed %.0f: F1@5 SIT %.4f  S %.4f", static_cast<double>(seed), sit, s) +
                      fmt("  T %.4f", t) + (ok ? "" : "  (trend violated)"));
  }
  details.push_back("trend holds in " + std::to_string(holds) + "/5 seeds (>= 4 required)");
  report.add("ablation trend", holds >= 4, details);
}

// --- pruning and CLI --------------------------------------------------------

std::string shell_quote(const std::string& s) { return "'" + s + "'"; }

struct Shell {
  int code = -1;
  std::string out;
};

Shell shell(const std::string& args) {
  Shell r;
  const std::string cmd = shell_quote(ECOREC_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof(buf), pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string data_config(const std::filesystem::path& data) {
  const std::string d = data.string();
  return "data.triples = " + d + "/triples.tsv\n"
         "data.interactions = " + d + "/interactions.tsv\n"
         "data.text_features = " + d + "/text_features.tsv\n"
         "data.image_features = " + d + "/image_features.tsv\n";
}

void pruning_and_determinism(Report& report) {
  std::vector<std::string> details;
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::size_t> size(1, 40), degree(1, 6);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int sound = 0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t regions = size(rng), features = size(rng), min_degree = degree(rng);
    const double density = 0.5 * unit(rng);
    std::vector<datamodel::Triple> triples;
    for (std::uint32_t r = 0; r < regions; ++r) {
      for (std::uint32_t f = 0; f < features; ++f) {
        if (unit(rng) < density) triples.push_back({r, f % 3, f});
      }
    }
    const kg::KnowledgeGraph pruned = kg::prune_graph(kg::build_graph(regions, features, 3, triples), min_degree);
    bool ok = pruned.n_regions() == regions;
    for (std::uint32_t f = 0; f < features; ++f) {
      const std::size_t deg = pruned.degree(pruned.feature_node(f));
      ok &= deg == 0 || deg >= min_degree;
    }
    sound += ok;
  }
  details.push_back("post-prune min feature degree >= min_degree on " + std::to_string(sound) + "/100 random graphs");

  testing::TempDir dir("acceptance_det");
  testing::write_file(dir / "run.cfg", data_config(dir / "data") + "seed = 0\n");
  const std::string cfg = shell_quote((dir / "run.cfg").string());
  bool cli_ok = shell("gen --config " + cfg + " --out " + shell_quote((dir / "data").string())).code == 0;
  for (const char* run : {"a", "b"}) {
    const std::string out = shell_quote((dir / run).string());
    cli_ok &= shell("train --config " + cfg + " --out " + out).code == 0;
    cli_ok &= shell("eval --config " + cfg + " --out " + out).code == 0;
  }
  const std::string a = testing::read_file(dir / "a" / "eval_report.json");
  const std::string b = testing::read_file(dir / "b" / "eval_report.json");
  const bool identical = cli_ok && !a.empty() && a == b;
  details.push_back(std::string("two full CLI runs: eval_report.json ") +
                    (identical ? "byte-identical (" + std::to_string(a.size()) + " bytes)" : "differs or missing"));
  report.add("pruning and determinism", sound == 100 && identical, details);
}

void fusion_properties(Report& report) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> gauss;
  auto random = [&](Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = gauss(rng);
    return m;
  };
  const Eigen::Index d = 16;
  double attention_worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto ab = multimodal::attention_weights(random(1, d), random(1, d), random(d, d), random(d, 1));
    attention_worst = std::max(attention_worst, std::abs(ab.image + ab.text - 1.0));
  }
  const multimodal::FusionWeights none;
  bool sum_exact = true;
  double gated_worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Matrix a = random(8, d), b = random(8, d);
    sum_exact &= multimodal::fuse({multimodal::FusionMethod::Sum}, a, b, {}, {}, none) ==
                 multimodal::fuse({multimodal::FusionMethod::Sum}, b, a, {}, {}, none);
    const Matrix gated = multimodal::fuse({multimodal::FusionMethod::Gated}, Matrix::Zero(8, d), b, {}, {}, none);
    gated_worst = std::max(gated_worst, (gated - 0.5 * b).cwiseAbs().maxCoeff());
  }
  const bool pass = attention_worst <= 1e-12 && sum_exact && gated_worst <= 1e-12;
  report.add("fusion properties", pass,
             {fmt("attention |alpha + beta - 1| max %.3g over 1000 inputs (<= 1e-12)", attention_worst),
              std::string("sum fusion commutative: ") + (sum_exact ? "exact" : "NOT exact"),
              fmt("gated with zero gate input vs 0.5 TF: max |diff| %.3g (<= 1e-12)", gated_worst)});
}

void cli_path(Report& report, Clock::time_point suite_start) {
  testing::TempDir dir("acceptance_cli");
  testing::write_file(dir / "run.cfg", data_config(dir / "data"));
  const std::string cfg = shell_quote((dir / "run.cfg").string());
  const std::string out = shell_quote((dir / "model").string());
  std::vector<std::string> details;
  const Shell gen = shell("gen --config " + cfg + " --out " + shell_quote((dir / "data").string()));
  const Shell train = shell("train --config " + cfg + " --out " + out);
  const Shell evaluate = shell("eval --config " + cfg + " --out " + out);
  const Shell rec = shell("recommend --config " + cfg + " --out " + out + " --region R7 --k 5");
  std::size_t lines = 0;
  for (char c : rec.out) lines += c == '\n';
  details.push_back("exit codes: gen " + std::to_string(gen.code) + ", train " + std::to_string(train.code) +
                    ", eval " + std::to_string(evaluate.code) + ", recommend " + std::to_string(rec.code));
  details.push_back("recommend --region R7 --k 5 printed " + std::to_string(lines) + " lines");
  const double elapsed = seconds_since(suite_start);
  details.push_back(fmt("acceptance suite runtime so far %.1f s (< 300 s)", elapsed));
  const bool pass = gen.code == 0 && train.code == 0 && evaluate.code == 0 && rec.code == 0 && lines == 5 &&
                    elapsed < 300.0;
  report.add("end-to-end CLI path", pass, details);
}

}  // namespace

int main() {
  const auto start = Clock::now();
  Report report;
  std::vector<SeedRuns> runs;
  gradient_exactness(report);
  metric_oracle(report);
  closed_form_metrics(report);
  planted_learning(report, runs);
  ablation_trend(report, runs);
  pruning_and_determinism(report);
  fusion_properties(report);
  cli_path(report, start);
  std::cout << (report.failures() == 0 ? "all criteria passed" : std::to_string(report.failures()) + " criterion(s) failed")
            << fmt(" in %.1f s\n", seconds_since(start));
  return report.failures() == 0 ? 0 : 1;
}
