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
#include <vector>

#include <Eigen/SparseCore>

#include "ecorec/datamodel.hpp"
#include "ecorec/linalg.hpp"

namespace ecorec::kg {

struct Edge {
  std::uint32_t neighbor = 0;
  std::uint32_t relation = 0;
};

// Undirected bipartite region-feature graph. Node ids: regions occupy
// [0, n_regions), feature f is node n_regions + f. Pruned features keep
// their node slot but lose every edge.
class KnowledgeGraph {
 public:
  using SparseOperator = Eigen::SparseMatrix<double, Eigen::RowMajor>;

  KnowledgeGraph() = default;
  KnowledgeGraph(std::size_t n_regions, std::size_t n_features, std::size_t n_relations,
                 std::span<const datamodel::Triple> triples);

  std::size_t n_regions() const { return n_regions_; }
  std::size_t n_feature_slots() const { return n_features_; }
  std::size_t n_nodes() const { return n_regions_ + n_features_; }
  std::size_t n_relations() const { return n_relations_; }

  // Features that still have at least one edge.
  std::size_t live_features() const;
  // Number of relation types that label at least one edge.
  std::size_t live_relations() const;
  // Undirected edge (triple) count.
  std::size_t edge_count() const { return triples_.size(); }

  std::uint32_t feature_node(std::uint32_t feature) const {
    return static_cast<std::uint32_t>(n_regions_) + feature;
  }
  bool is_region(std::uint32_t node) const { return node < n_regions_; }

  std::span<const Edge> neighbors(std::uint32_t node) const { return adjacency_.at(node); }
  std::size_t degree(std::uint32_t node) const { return adjacency_.at(node).size(); }

  const std::vector<datamodel::Triple>& triples() const { return triples_; }

  // Row-normalized adjacency: (M x)_v is the mean of x over v's neighbors,
  // zero for isolated nodes.
  const SparseOperator& mean_operator() const { return mean_; }

 private:
  std::size_t n_regions_ = 0;
  std::size_t n_features_ = 0;
  std::size_t n_relations_ = 0;
  std::vector<datamodel::Triple> triples_;
  std::vector<std::vector<Edge>> adjacency_;
  SparseOperator mean_;
};

// Throws IndexError when a triple references an id outside the counts.
KnowledgeGraph build_graph(std::size_t n_regions, std::size_t n_features,
                           std::size_t n_relations, std::span<const datamodel::Triple> triples);
KnowledgeGraph build_graph(const datamodel::Dataset& dataset);

// Drops every feature with degree < min_degree. Regions are never removed.
KnowledgeGraph prune_graph(const KnowledgeGraph& graph, std::size_t min_degree);

struct GraphStats {
  std::size_t regions = 0;
  std::size_t features = 0;
  std::size_t triples = 0;
  std::size_t relation_types = 0;
};

GraphStats graph_stats(const KnowledgeGraph& graph);

enum class Activation { LeakyRelu, Linear };

inline constexpr double kLeakySlope = 0.2;

// Intermediate tensors of a forward pass, kept for the backward pass.
struct AggregationTrace {
  std::vector<Matrix> layers;  // E^0 .. E^L, all nodes
  std::vector<Matrix> mixed;   // H^l = E^l + mean_neighbors(E^l)
  std::vector<Matrix> pre;     // Z^l = H^l W_l^T
};

// Layered mean aggregation over the whole graph:
//   e^{l+1}_v = act(W_l (e^l_v + mean_{u in N(v)} e^l_u)),
// returning RR_r = sum_{l=0..L} e^l_r for every region. With no weights the
// result is the region rows of `node_embeddings`.
Matrix aggregate_regions(const KnowledgeGraph& graph, const Matrix& node_embeddings,
                         std::span<const Matrix> weights,
                         Activation activation = Activation::LeakyRelu,
                         AggregationTrace* trace = nullptr);

// Accumulates dLoss/d(node_embeddings) and dLoss/dW_l given dLoss/dRR.
void aggregate_regions_backward(const KnowledgeGraph& graph, std::span<const Matrix> weights,
                                const AggregationTrace& trace, const Matrix& grad_regions,
                                Matrix& grad_nodes, std::span<Matrix> grad_weights,
                                Activation activation = Activation::LeakyRelu);

}  // namespace ecorec::kg
