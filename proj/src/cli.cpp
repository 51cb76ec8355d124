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

#include "ecorec/cli.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"

#include "ecorec/error.hpp"
#include "ecorec/experiment.hpp"
#include "ecorec/kg.hpp"

namespace ecorec::cli {
namespace fs = std::filesystem;

namespace {

const std::map<std::string, std::string>& defaults() {
  static const std::map<std::string, std::string> table = {
      {"out", ""},
      {"seed", "0"},
      {"k", "5"},
      {"variant", "SIT"},
      {"data.triples", ""},
      {"data.interactions", ""},
      {"data.text_features", ""},
      {"data.image_features", ""},
      {"gen.n_regions", "200"},
      {"gen.n_patterns", "40"},
      {"gen.n_features", "60"},
      {"gen.n_clusters", "4"},
      {"gen.p_in", "0.5"},
      {"gen.p_out", "0.02"},
      {"gen.feature_noise", "0.1"},
      {"gen.text_dim", "32"},
      {"gen.image_dim", "64"},
      {"gen.n_relations", "29"},
      {"gen.links_per_region", "8"},
      {"gen.link_noise", "0.1"},
      {"gen.n_triples", "0"},
      {"kg.min_degree", "2"},
      {"train.embedding_dim", "64"},
      {"train.layers", "3"},
      {"train.learning_rate", "0.001"},
      {"train.batch_size", "128"},
      {"train.negatives_per_positive", "1"},
      {"train.l2_coeff", "0.0001"},
      {"train.epochs", "200"},
      {"train.patience", "10"},
      {"fusion.method", "attention"},
      {"fusion.gate_direction", "image_gates_text"},
      {"model.add_pattern_id", "false"},
      {"ablate.variants", "S,I,T,SI,ST,IT,SIT"},
      {"sweep.param", "layers"},
      {"sweep.values", "0,1,2,3,4"},
  };
  return table;
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

class UsageError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

constexpr const char* kUsage =
    "usage: ecorec <command> [--config FILE] [--set key=value]... [--out DIR] [--seed N] [--k K]\n"
    "commands:\n"
    "  gen        write a synthetic planted-partition corpus to --out\n"
    "  stats      print knowledge-graph counts before and after pruning\n"
    "  train      train a model and write checkpoint.json under --out\n"
    "  eval       evaluate the checkpoint on the test split (eval_report.json)\n"
    "  recommend  print the top-K patterns for --region\n"
    "  ablate     train and evaluate each variant in ablate.variants\n"
    "  sweep      vary sweep.param over sweep.values\n";

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

datamodel::Dataset load_configured_dataset(const RunConfig& config) {
  datamodel::DatasetPaths paths;
  paths.triples = config.get("data.triples");
  paths.interactions = config.get("data.interactions");
  if (config.has("data.text_features")) paths.text_features = config.get("data.text_features");
  if (config.has("data.image_features")) paths.image_features = config.get("data.image_features");
  return datamodel::load_dataset(paths);
}

eval::PreparedData prepare_configured(const RunConfig& config, std::uint64_t seed) {
  return eval::prepare(load_configured_dataset(config), config.get_size("kg.min_degree"), seed);
}

model::Checkpoint load_trained(const RunConfig& config, const eval::PreparedData& data) {
  const fs::path path = fs::path(config.get("out")) / "checkpoint.json";
  model::Checkpoint cp = model::load_checkpoint(path);
  model::validate_shapes(cp.params, data.shapes(), cp.config);
  return cp;
}

int cmd_gen(const RunConfig& config, std::ostream& out) {
  config.require({"out"});
  const auto data = datamodel::gen_synthetic(config.gen_config());
  const fs::path dir = config.get("out");
  datamodel::write_synthetic(dir, data);
  write_text(dir / "resolved.cfg", config.resolved());
  out << "wrote " << data.dataset.triples.size() << " triples, "
      << datamodel::count_pairs(data.dataset.positives) << " interactions, "
      << data.dataset.n_patterns() << " patterns to " << dir.string() << "\n";
  return 0;
}

int cmd_stats(const RunConfig& config, std::ostream& out) {
  config.require({"data.triples"});
  const auto triples = datamodel::load_triples(config.get("data.triples"));
  const auto graph = kg::build_graph(triples.entities.count(datamodel::EntityKind::Region),
                                     triples.entities.count(datamodel::EntityKind::Feature),
                                     triples.relations.size(), triples.triples);
  const auto pruned = kg::prune_graph(graph, config.get_size("kg.min_degree"));
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-8s  %8s  %8s  %8s  %18s\n", "", "Regions", "Features", "Triples",
                "Relationship types");
  out << buf;
  for (const auto& [label, g] : {std::pair<const char*, const kg::KnowledgeGraph*>{"raw", &graph},
                                 {"pruned", &pruned}}) {
    const kg::GraphStats s = kg::graph_stats(*g);
    std::snprintf(buf, sizeof(buf), "%-8s  %8zu  %8zu  %8zu  %18zu\n", label, s.regions, s.features,
                  s.triples, s.relation_types);
    out << buf;
  }
  return 0;
}

int cmd_train(const RunConfig& config, std::ostream& out) {
  config.require({"data.triples", "data.interactions", "out"});
  const model::TrainConfig cfg = config.train_config();
  const model::VariantSpec variant = config.variant();
  const auto data = prepare_configured(config, cfg.seed);
  const model::TrainResult result = model::train(data.training_data(), cfg, variant);

  const fs::path dir = config.get("out");
  fs::create_directories(dir);
  model::save_checkpoint(dir / "checkpoint.json", {result.params, cfg, variant});
  std::ostringstream history;
  history << "# epoch\tvalidation_f1@" << cfg.k << "\n0\t" << datamodel::format_double(result.initial_validation_f1) << "\n";
  for (std::size_t e = 0; e < result.history.size(); ++e) {
    history << e + 1 << '\t' << datamodel::format_double(result.history[e]) << '\n';
  }
  write_text(dir / "history.tsv", history.str());
  write_text(dir / "resolved.cfg", config.resolved());
  out << "trained " << variant.name() << " for " << result.history.size() << " epochs; best epoch "
      << result.best_epoch << ", validation F1@" << cfg.k << " " << std::fixed << std::setprecision(4)
      << result.best_validation_f1 << "\n";
  return 0;
}

int cmd_eval(const RunConfig& config, std::ostream& out) {
  config.require({"data.triples", "data.interactions", "out"});
  const fs::path dir = config.get("out");
  const model::Checkpoint probe = model::load_checkpoint(dir / "checkpoint.json");
  const auto data = prepare_configured(config, probe.config.seed);
  const model::Checkpoint cp = load_trained(config, data);
  const std::size_t k = config.get_size("k");
  const eval::EvalReport report = eval::evaluate(data, cp.params, model::options_of(cp.config, cp.variant), k);
  write_text(dir / "eval_report.json", eval::report_to_json(report, data.dataset.entities));
  write_text(dir / "resolved.cfg", config.resolved());
  out << std::fixed << std::setprecision(4) << "Precision@" << k << " " << report.precision_at_k
      << "  Recall@" << k << " " << report.recall_at_k << "  F1@" << k << " " << report.f1_at_k
      << "  (" << report.regions_evaluated << " regions)\n";
  return 0;
}

int cmd_recommend(const RunConfig& config, const std::string& region_name, std::ostream& out) {
  config.require({"data.triples", "data.interactions", "out"});
  if (region_name.empty()) throw UsageError("recommend requires --region");
  const model::Checkpoint probe = model::load_checkpoint(fs::path(config.get("out")) / "checkpoint.json");
  const auto data = prepare_configured(config, probe.config.seed);
  const model::Checkpoint cp = load_trained(config, data);
  const auto id = data.dataset.entities.find(region_name);
  if (!id || id->kind != datamodel::EntityKind::Region) {
    throw ConfigError("unknown region '" + region_name + "'");
  }
  const auto options = model::options_of(cp.config, cp.variant);
  const std::size_t k = config.get_size("k");
  const auto top = eval::rank_region(data, id->index, cp.params, options, k);
  const Vector scores = model::score_all(id->index, cp.params, data.inputs(), options);
  for (const std::uint32_t p : top) {
    out << data.dataset.entities.name({datamodel::EntityKind::Pattern, p}) << '\t'
        << datamodel::format_double(scores(p)) << '\n';
  }
  return 0;
}

int cmd_ablate(const RunConfig& config, std::ostream& out) {
  config.require({"data.triples", "data.interactions", "out"});
  const model::TrainConfig cfg = config.train_config();
  std::vector<model::VariantSpec> variants;
  for (const auto& name : split_list(config.get("ablate.variants"))) variants.push_back(model::VariantSpec::parse(name));
  if (variants.empty()) throw ConfigError("ablate.variants is empty");
  const auto data = prepare_configured(config, cfg.seed);
  const auto rows = eval::run_ablation(data, cfg, variants);
  const std::string table = eval::format_table("Variant", rows, cfg.k);
  const fs::path dir = config.get("out");
  fs::create_directories(dir);
  write_text(dir / "ablation.txt", table);
  write_text(dir / "resolved.cfg", config.resolved());
  out << table;
  return 0;
}

int cmd_sweep(const RunConfig& config, std::ostream& out) {
  config.require({"data.triples", "data.interactions", "out"});
  const model::TrainConfig cfg = config.train_config();
  const eval::SweepParam param = eval::parse_sweep_param(config.get("sweep.param"));
  const auto values = split_list(config.get("sweep.values"));
  for (const auto& v : values) eval::apply_sweep_value(cfg, param, v);
  const auto data = prepare_configured(config, cfg.seed);
  const auto rows = eval::run_sweep(data, cfg, config.variant(), param, values);
  const std::string table = eval::format_table(eval::to_string(param), rows, cfg.k);
  const fs::path dir = config.get("out");
  fs::create_directories(dir);
  write_text(dir / "sweep.txt", table);
  write_text(dir / "resolved.cfg", config.resolved());
  out << table;
  return 0;
}

}  // namespace

RunConfig::RunConfig() : values_(defaults()) {}

void RunConfig::merge_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::vector<std::string> problems;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      problems.push_back(path.string() + ":" + std::to_string(number) + ": expected 'key = value'");
      continue;
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (!values_.contains(key)) {
      problems.push_back(path.string() + ":" + std::to_string(number) + ": unknown key '" + key + "'");
      continue;
    }
    values_[key] = value;
  }
  if (!problems.empty()) {
    std::string msg = "invalid config:";
    for (const auto& p : problems) msg += " " + p + ";";
    msg.pop_back();
    throw ConfigError(msg);
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!values_.contains(key)) throw ConfigError("unknown key '" + key + "'");
  values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown key '" + key + "'");
  return it->second;
}

double RunConfig::get_double(const std::string& key) const {
  const std::string& text = get(key);
  double v = 0.0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw ConfigError(key + ": expected a number, got '" + text + "'");
  }
  return v;
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  const std::string& text = get(key);
  std::uint64_t v = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

std::size_t RunConfig::get_size(const std::string& key) const {
  return static_cast<std::size_t>(get_u64(key));
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& text = get(key);
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

void RunConfig::require(std::initializer_list<const char*> keys) const {
  std::string missing;
  for (const char* key : keys) {
    if (!has(key)) missing += std::string(missing.empty() ? "" : ", ") + key;
  }
  if (!missing.empty()) throw ConfigError("missing required keys: " + missing);
}

datamodel::GenConfig RunConfig::gen_config() const {
  datamodel::GenConfig g;
  g.n_regions = get_size("gen.n_regions");
  g.n_patterns = get_size("gen.n_patterns");
  g.n_features = get_size("gen.n_features");
  g.n_clusters = get_size("gen.n_clusters");
  g.p_in = get_double("gen.p_in");
  g.p_out = get_double("gen.p_out");
  g.feature_noise = get_double("gen.feature_noise");
  g.text_dim = get_size("gen.text_dim");
  g.image_dim = get_size("gen.image_dim");
  g.n_relations = get_size("gen.n_relations");
  g.links_per_region = get_size("gen.links_per_region");
  g.link_noise = get_double("gen.link_noise");
  g.n_triples = get_size("gen.n_triples");
  g.seed = get_u64("seed");
  g.validate();
  return g;
}

model::TrainConfig RunConfig::train_config() const {
  model::TrainConfig c;
  c.embedding_dim = get_size("train.embedding_dim");
  c.layers = get_size("train.layers");
  c.learning_rate = get_double("train.learning_rate");
  c.batch_size = get_size("train.batch_size");
  c.negatives_per_positive = get_size("train.negatives_per_positive");
  c.l2_coeff = get_double("train.l2_coeff");
  c.epochs = get_size("train.epochs");
  c.patience = get_size("train.patience");
  c.k = get_size("k");
  c.seed = get_u64("seed");
  c.fusion.method = multimodal::parse_fusion_method(get("fusion.method"));
  c.fusion.gate_direction = multimodal::parse_gate_direction(get("fusion.gate_direction"));
  c.add_pattern_id = get_bool("model.add_pattern_id");
  c.validate();
  return c;
}

model::VariantSpec RunConfig::variant() const { return model::VariantSpec::parse(get("variant")); }

std::string RunConfig::resolved() const {
  std::string out;
  for (const auto& [key, value] : values_) out += key + " = " + value + "\n";
  return out;
}

int run_command(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  if (args.empty()) {
    err << kUsage;
    return 2;
  }
  const std::string command = args[0];
  if (command == "--help" || command == "-h" || command == "help") {
    out << kUsage;
    return 0;
  }
  static const std::set<std::string> known = {"gen", "stats", "train", "eval", "recommend", "ablate", "sweep"};
  if (!known.contains(command)) {
    err << "ecorec: unknown command '" << command << "'\n" << kUsage;
    return 2;
  }

  CLI::App app("ecorec " + command);
  std::string config_path, out_dir, region, seed, k;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "key = value configuration file");
  app.add_option("--set", overrides, "override one key (key=value), repeatable");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", seed, "random seed");
  app.add_option("--k", k, "list length K");
  app.add_option("--region", region, "region name (recommend)");

  std::vector<std::string> rest(args.begin() + 1, args.end());
  std::reverse(rest.begin(), rest.end());
  try {
    app.parse(rest);
  } catch (const CLI::CallForHelp&) {
    out << app.help() << kUsage;
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "ecorec: " << e.what() << "\n";
    return 2;
  }

  try {
    RunConfig config;
    if (!config_path.empty()) config.merge_file(config_path);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
      config.set(trim(std::string_view(kv).substr(0, eq)), trim(std::string_view(kv).substr(eq + 1)));
    }
    if (!out_dir.empty()) config.set("out", out_dir);
    if (!seed.empty()) config.set("seed", seed);
    if (!k.empty()) config.set("k", k);

    if (command == "gen") return cmd_gen(config, out);
    if (command == "stats") return cmd_stats(config, out);
    if (command == "train") return cmd_train(config, out);
    if (command == "eval") return cmd_eval(config, out);
    if (command == "recommend") return cmd_recommend(config, region, out);
    if (command == "ablate") return cmd_ablate(config, out);
    return cmd_sweep(config, out);
  } catch (const ConfigError& e) {
    err << "ecorec: " << command << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "ecorec: " << command << ": " << e.what() << "\n";
    return 1;
  }
}

}  // namespace ecorec::cli
