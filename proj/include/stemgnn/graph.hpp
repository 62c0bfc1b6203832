#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stemgnn/tensor.hpp"

namespace stemgnn {

// Canonical simple undirected graph: symmetric CSR, no self-loops, no duplicates,
// neighbor lists sorted ascending. Immutable after construction; perturbation
// operators return new graphs.
struct Graph {
  int64_t n = 0;
  std::vector<int64_t> csr_offsets;  // size n+1
  std::vector<int32_t> csr_targets;  // size 2 * undirected edge count
  Tensor features;                   // n x d
  std::vector<int32_t> labels;       // -1 = absent
  int32_t num_classes = 0;

  int64_t feature_dim() const { return features.rank() == 2 ? features.shape[1] : 0; }
  int64_t undirected_edge_count() const {
    return static_cast<int64_t>(csr_targets.size()) / 2;
  }
  int64_t degree(int64_t v) const {
    return csr_offsets[static_cast<size_t>(v) + 1] - csr_offsets[static_cast<size_t>(v)];
  }
  bool has_edge(int64_t u, int64_t v) const;
  std::vector<std::pair<int32_t, int32_t>> undirected_edges() const;  // u < v
};

struct PerturbationBudget {
  double feature_mask_rate = 0.0;  // alpha in [0,1]
  double edge_drop_rate = 0.0;     // p in [0,1]
  std::vector<int32_t> eval_nodes;
  uint64_t seed = 0;
};

struct SbmSpec {
  int64_t n = 0;
  int32_t num_blocks = 2;
  double intra_prob = 0.1;
  double inter_prob = 0.01;
  int64_t feature_dim = 8;
  double feature_signal = 1.0;  // class-mean separation
  uint64_t seed = 0;
};

// Rebuilds the canonical form from an edge list: drops self-loops, merges
// duplicates and reciprocal directions, sorts neighbor lists.
Graph build_graph(int64_t n, const std::vector<std::pair<int32_t, int32_t>>& edges,
                  Tensor features, std::vector<int32_t> labels, int32_t num_classes);
Graph canonicalize(const Graph& g);

// Raw citation-network text layout: content = "id <tab-separated 0/1 features> label",
// cites = "cited citing" per line. Ids remapped to [0,n) in content order, labels to
// contiguous class ids in first-seen order.
Graph load_cora_raw(const std::string& content_path, const std::string& cites_path);

// Native format: features file starts with a header "n d num_classes", then one line
// per node (tab-separated reals, final token = integer label or "?"); edges file has
// one "u v" pair per line, 0-based.
Graph load_native(const std::string& features_path, const std::string& edges_path);
void save_native(const Graph& g, const std::string& features_path,
                 const std::string& edges_path);

Graph generate_sbm(const SbmSpec& spec);

// Zeroes each (eval node, dimension) entry independently with probability
// feature_mask_rate; draws are keyed by (seed, node, dim). Structure unchanged.
Graph mask_features(const Graph& g, const PerturbationBudget& budget);

// 0/1 indicator of the entries mask_features would zero for the same budget.
Tensor feature_mask_indicator(const Graph& g, const PerturbationBudget& budget);

// Drops each undirected edge touching an eval node independently with probability
// edge_drop_rate, both directions together; draws keyed by (seed, canonical edge key).
// If every candidate is selected, the candidate with the smallest key is retained.
Graph drop_edges(const Graph& g, const PerturbationBudget& budget);

std::vector<int64_t> degree_vector(const Graph& g);

// h(v) = mean cosine similarity between v's features and its neighbors', using
// l2-normalized features. Absent for nodes with zero-norm/non-finite features,
// no neighbors, or no valid-feature neighbors.
std::vector<std::optional<double>> feature_homophily_scores(const Graph& g);

}  // namespace stemgnn
