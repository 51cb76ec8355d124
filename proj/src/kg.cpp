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

#include "ecorec/kg.hpp"

#include <algorithm>
#include <set>
#include <string>

#include "ecorec/error.hpp"

namespace ecorec::kg {

using datamodel::Triple;

KnowledgeGraph::KnowledgeGraph(std::size_t n_regions, std::size_t n_features,
                               std::size_t n_relations, std::span<const Triple> triples)
    : n_regions_(n_regions), n_features_(n_features), n_relations_(n_relations) {
  std::set<Triple> seen;
  for (const Triple& t : triples) {
    if (t.region >= n_regions || t.feature >= n_features || t.relation >= n_relations) {
      throw IndexError("triple (" + std::to_string(t.region) + ", " + std::to_string(t.relation) +
                       ", " + std::to_string(t.feature) + ") out of range for " +
                       std::to_string(n_regions) + " regions, " + std::to_string(n_relations) +
                       " relations, " + std::to_string(n_features) + " features");
    }
    if (seen.insert(t).second) triples_.push_back(t);
  }

  adjacency_.assign(n_nodes(), {});
  for (const Triple& t : triples_) {
    const std::uint32_t f = feature_node(t.feature);
    adjacency_[t.region].push_back({f, t.relation});
    adjacency_[f].push_back({t.region, t.relation});
  }

  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(2 * triples_.size());
  for (std::size_t v = 0; v < adjacency_.size(); ++v) {
    const double w = adjacency_[v].empty() ? 0.0 : 1.0 / static_cast<double>(adjacency_[v].size());
    for (const Edge& e : adjacency_[v]) {
      entries.emplace_back(static_cast<int>(v), static_cast<int>(e.neighbor), w);
    }
  }
  const auto n = static_cast<Eigen::Index>(n_nodes());
  mean_.resize(n, n);
  mean_.setFromTriplets(entries.begin(), entries.end());
}

std::size_t KnowledgeGraph::live_features() const {
  std::size_t live = 0;
  for (std::size_t f = 0; f < n_features_; ++f) live += adjacency_[n_regions_ + f].empty() ? 0 : 1;
  return live;
}

std::size_t KnowledgeGraph::live_relations() const {
  std::vector<bool> used(n_relations_, false);
  for (const Triple& t : triples_) used[t.relation] = true;
  return static_cast<std::size_t>(std::count(used.begin(), used.end(), true));
}

KnowledgeGraph build_graph(std::size_t n_regions, std::size_t n_features, std::size_t n_relations,
                           std::span<const Triple> triples) {
  return KnowledgeGraph(n_regions, n_features, n_relations, triples);
}

KnowledgeGraph build_graph(const datamodel::Dataset& dataset) {
  return KnowledgeGraph(dataset.n_regions(), dataset.n_features(), dataset.relations.size(),
                        dataset.triples);
}

KnowledgeGraph prune_graph(const KnowledgeGraph& graph, std::size_t min_degree) {
  if (min_degree < 1) throw ConfigError("prune_graph: min_degree must be >= 1");
  // Feature degrees depend only on region links, so one pass is a fixpoint.
  std::vector<Triple> kept;
  kept.reserve(graph.edge_count());
  for (const Triple& t : graph.triples()) {
    if (graph.degree(graph.feature_node(t.feature)) >= min_degree) kept.push_back(t);
  }
  return KnowledgeGraph(graph.n_regions(), graph.n_feature_slots(), graph.n_relations(), kept);
}

GraphStats graph_stats(const KnowledgeGraph& graph) {
  return {graph.n_regions(), graph.live_features(), graph.edge_count(), graph.live_relations()};
}

namespace {

void apply_activation(const Matrix& pre, Matrix& out, Activation activation) {
  if (activation == Activation::Linear) {
    out = pre;
  } else {
    out = pre.unaryExpr([](double z) { return z > 0.0 ? z : kLeakySlope * z; });
  }
}

void check_shapes(const KnowledgeGraph& graph, const Matrix& node_embeddings,
                  std::span<const Matrix> weights) {
  if (static_cast<std::size_t>(node_embeddings.rows()) != graph.n_nodes()) {
    throw DimensionError("aggregate_regions: " + std::to_string(node_embeddings.rows()) +
                         " embedding rows for " + std::to_string(graph.n_nodes()) + " nodes");
  }
  const Eigen::Index d = node_embeddings.cols();
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != d || weights[l].cols() != d) {
      throw DimensionError("aggregate_regions: W_" + std::to_string(l) + " is " +
                           std::to_string(weights[l].rows()) + "x" +
                           std::to_string(weights[l].cols()) + ", embeddings have d=" +
                           std::to_string(d));
    }
  }
}

}  // namespace

Matrix aggregate_regions(const KnowledgeGraph& graph, const Matrix& node_embeddings,
                         std::span<const Matrix> weights, Activation activation,
                         AggregationTrace* trace) {
  check_shapes(graph, node_embeddings, weights);
  const auto n_regions = static_cast<Eigen::Index>(graph.n_regions());
  const auto& mean = graph.mean_operator();

  AggregationTrace local;
  AggregationTrace& t = trace ? *trace : local;
  t.layers.assign(1, node_embeddings);
  t.mixed.clear();
  t.pre.clear();

  Matrix rr = node_embeddings.topRows(n_regions);
  for (const Matrix& w : weights) {
    const Matrix& current = t.layers.back();
    Matrix mixed = current + mean * current;
    Matrix pre = mixed * w.transpose();
    Matrix next;
    apply_activation(pre, next, activation);
    rr += next.topRows(n_regions);
    t.mixed.push_back(std::move(mixed));
    t.pre.push_back(std::move(pre));
    t.layers.push_back(std::move(next));
  }
  return rr;
}

void aggregate_regions_backward(const KnowledgeGraph& graph, std::span<const Matrix> weights,
                                const AggregationTrace& trace, const Matrix& grad_regions,
                                Matrix& grad_nodes, std::span<Matrix> grad_weights,
                                Activation activation) {
  const auto n_regions = static_cast<Eigen::Index>(graph.n_regions());
  const auto n_nodes = static_cast<Eigen::Index>(graph.n_nodes());
  const Eigen::Index d = grad_regions.cols();
  const auto& mean = graph.mean_operator();

  // RR sums every layer, so each E^l receives grad_regions directly.
  Matrix direct = Matrix::Zero(n_nodes, d);
  direct.topRows(n_regions) = grad_regions;

  Matrix grad = direct;
  for (std::size_t l = weights.size(); l-- > 0;) {
    Matrix grad_pre = grad;
    if (activation == Activation::LeakyRelu) {
      grad_pre.array() *= trace.pre[l].array().unaryExpr(
          [](double z) { return z > 0.0 ? 1.0 : kLeakySlope; });
    }
    grad_weights[l].noalias() += grad_pre.transpose() * trace.mixed[l];
    const Matrix grad_mixed = grad_pre * weights[l];
    grad = direct + grad_mixed;
    grad.noalias() += mean.transpose() * grad_mixed;
  }
  grad_nodes += grad;
}

}  // namespace ecorec::kg
