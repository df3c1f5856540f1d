#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <utility>
#include <vector>

#include "sgr/graph.hpp"
#include "sgr/tensor.hpp"

namespace sgr {

enum class Activation { identity, relu };

/// Undirected graph over spectral embedding channels. Adjacency is binary and
/// symmetric with a zero diagonal; self-loops are added only inside the
/// operators that need them. Edge cosine similarities are kept as diagnostic
/// metadata only.
struct SpectralGraph {
  int64_t n = 0;
  std::vector<std::pair<int64_t, int64_t>> edges;  // i < j, lexicographic
  std::vector<std::vector<int64_t>> neighbors;     // sorted per node
  std::vector<int64_t> degrees;
  std::vector<double> edge_cosine;  // aligned with edges; NaN when unknown

  bool has_edge(int64_t i, int64_t j) const {
    if (i == j) return false;
    const auto& nb = neighbors[static_cast<size_t>(i)];
    return std::binary_search(nb.begin(), nb.end(), j);
  }
};

namespace detail {

inline SpectralGraph graph_from_edges(int64_t n,
                                      std::vector<std::pair<int64_t, int64_t>> edges,
                                      std::vector<double> cosines) {
  SpectralGraph g;
  g.n = n;
  g.edges = std::move(edges);
  g.edge_cosine = std::move(cosines);
  g.neighbors.assign(static_cast<size_t>(n), {});
  for (const auto& [i, j] : g.edges) {
    g.neighbors[static_cast<size_t>(i)].push_back(j);
    g.neighbors[static_cast<size_t>(j)].push_back(i);
  }
  for (auto& nb : g.neighbors) std::sort(nb.begin(), nb.end());
  g.degrees.assign(static_cast<size_t>(n), 0);
  for (int64_t i = 0; i < n; ++i)
    g.degrees[static_cast<size_t>(i)] =
        static_cast<int64_t>(g.neighbors[static_cast<size_t>(i)].size());
  return g;
}

/// Cosine similarity with the zero-vector guard: any all-zero row has
/// similarity 0 (distance 1) to every other row.
template <typename T>
double cosine_similarity(const T* a, const T* b, int64_t dim) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (int64_t c = 0; c < dim; ++c) {
    dot += static_cast<double>(a[c]) * static_cast<double>(b[c]);
    na += static_cast<double>(a[c]) * static_cast<double>(a[c]);
    nb += static_cast<double>(b[c]) * static_cast<double>(b[c]);
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace detail

/// K-nearest-neighbor graph under cosine distance d = 1 - cos, symmetrized by
/// union. Ties break toward the lower node index; a node is never its own
/// neighbor.
template <typename T>
SpectralGraph knn_graph(const TensorT<T>& features, int64_t k) {
  if (features.rank() != 2)
    throw DimensionError("knn_graph: features must be n x C, got " +
                         shape_str(features.shape()));
  const int64_t n = features.extent(0);
  const int64_t dim = features.extent(1);
  if (n < 2) throw ParameterError("knn_graph: need at least 2 nodes");
  if (k < 1 || k >= n)
    throw ParameterError("knn_graph: k must be in [1, n), got k=" + std::to_string(k) +
                         " for n=" + std::to_string(n));

  // Pairwise cosine similarities; distance = 1 - similarity.
  std::vector<double> sim(static_cast<size_t>(n * n), 0.0);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = i + 1; j < n; ++j) {
      const double s = detail::cosine_similarity(features.raw() + i * dim,
                                                 features.raw() + j * dim, dim);
      sim[static_cast<size_t>(i * n + j)] = s;
      sim[static_cast<size_t>(j * n + i)] = s;
    }

  std::vector<std::pair<int64_t, int64_t>> edges;
  std::vector<double> cosines;
  std::vector<int64_t> order(static_cast<size_t>(n - 1));
  for (int64_t i = 0; i < n; ++i) {
    int64_t m = 0;
    for (int64_t j = 0; j < n; ++j)
      if (j != i) order[static_cast<size_t>(m++)] = j;
    std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
      const double da = 1.0 - sim[static_cast<size_t>(i * n + a)];
      const double db = 1.0 - sim[static_cast<size_t>(i * n + b)];
      if (da != db) return da < db;
      return a < b;
    });
    for (int64_t t = 0; t < k; ++t) {
      const int64_t j = order[static_cast<size_t>(t)];
      const auto e = std::minmax(i, j);
      edges.emplace_back(e.first, e.second);
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  cosines.reserve(edges.size());
  for (const auto& [i, j] : edges) cosines.push_back(sim[static_cast<size_t>(i * n + j)]);
  return detail::graph_from_edges(n, std::move(edges), std::move(cosines));
}

/// Dense normalized Laplacian L = I - D^{-1/2} A D^{-1/2}. Isolated nodes use
/// the D^{-1/2} = 0 convention, so their diagonal entry is 1.
template <typename T>
TensorT<T> normalized_laplacian(const SpectralGraph& g, int64_t dense_cap = 4096) {
  if (g.n > dense_cap)
    throw ParameterError("normalized_laplacian: " + std::to_string(g.n) +
                         " nodes exceed dense cap " + std::to_string(dense_cap));
  TensorT<T> lap = TensorT<T>::eye(g.n);
  std::vector<double> dinv(static_cast<size_t>(g.n), 0.0);
  for (int64_t i = 0; i < g.n; ++i)
    if (g.degrees[static_cast<size_t>(i)] > 0)
      dinv[static_cast<size_t>(i)] =
          1.0 / std::sqrt(static_cast<double>(g.degrees[static_cast<size_t>(i)]));
  for (const auto& [i, j] : g.edges) {
    const T w = static_cast<T>(dinv[static_cast<size_t>(i)] * dinv[static_cast<size_t>(j)]);
    lap.at(i, j) = -w;
    lap.at(j, i) = -w;
  }
  return lap;
}

/// Dense first-order propagation operator P = Dt^{-1/2} At Dt^{-1/2} with
/// At = A + I; the self-loop makes every Dt entry positive.
template <typename T>
TensorT<T> gcn_propagation(const SpectralGraph& g) {
  TensorT<T> p({g.n, g.n});
  std::vector<double> dinv(static_cast<size_t>(g.n));
  for (int64_t i = 0; i < g.n; ++i)
    dinv[static_cast<size_t>(i)] =
        1.0 / std::sqrt(static_cast<double>(g.degrees[static_cast<size_t>(i)] + 1));
  for (int64_t i = 0; i < g.n; ++i)
    p.at(i, i) = static_cast<T>(dinv[static_cast<size_t>(i)] * dinv[static_cast<size_t>(i)]);
  for (const auto& [i, j] : g.edges) {
    const T w = static_cast<T>(dinv[static_cast<size_t>(i)] * dinv[static_cast<size_t>(j)]);
    p.at(i, j) = w;
    p.at(j, i) = w;
  }
  return p;
}

/// Dense closed-neighborhood operator A + I used by message passing.
template <typename T>
TensorT<T> closed_adjacency(const SpectralGraph& g) {
  TensorT<T> a = TensorT<T>::eye(g.n);
  for (const auto& [i, j] : g.edges) {
    a.at(i, j) = T(1);
    a.at(j, i) = T(1);
  }
  return a;
}

/// Induced subgraph on `keep` (ascending original indices); edges survive only
/// when both endpoints are kept, so nodes may come out isolated.
inline SpectralGraph induced_subgraph(const SpectralGraph& g,
                                      const std::vector<int64_t>& keep) {
  std::vector<int64_t> remap(static_cast<size_t>(g.n), -1);
  for (size_t t = 0; t < keep.size(); ++t) remap[static_cast<size_t>(keep[t])] = static_cast<int64_t>(t);
  std::vector<std::pair<int64_t, int64_t>> edges;
  std::vector<double> cosines;
  for (size_t e = 0; e < g.edges.size(); ++e) {
    const int64_t a = remap[static_cast<size_t>(g.edges[e].first)];
    const int64_t b = remap[static_cast<size_t>(g.edges[e].second)];
    if (a >= 0 && b >= 0) {
      edges.emplace_back(a, b);
      cosines.push_back(g.edge_cosine[e]);
    }
  }
  return detail::graph_from_edges(static_cast<int64_t>(keep.size()), std::move(edges),
                                  std::move(cosines));
}

/// One first-order graph convolution on the record: act(P X W).
/// The propagation matrix enters as a non-trainable leaf; gradients flow
/// through node features and the weight only.
template <typename T>
NodeId gcn_layer(Graph<T>& record, const SpectralGraph& g, NodeId features, NodeId weight,
                 Activation act = Activation::relu) {
  if (record.value(features).extent(0) != g.n)
    throw DimensionError("gcn_layer: feature rows " +
                         std::to_string(record.value(features).extent(0)) +
                         " != node count " + std::to_string(g.n));
  const NodeId prop = record.leaf(gcn_propagation<T>(g));
  const NodeId mixed = record.matmul(prop, record.matmul(features, weight));
  return act == Activation::relu ? record.relu(mixed) : mixed;
}

/// Eq.-style neighborhood aggregation on the record: (A + I)(H Theta).
/// Rows are node features; Theta right-multiplies.
template <typename T>
NodeId message_passing(Graph<T>& record, const SpectralGraph& g, NodeId features,
                       NodeId theta) {
  if (record.value(features).extent(0) != g.n)
    throw DimensionError("message_passing: feature rows " +
                         std::to_string(record.value(features).extent(0)) +
                         " != node count " + std::to_string(g.n));
  const NodeId hood = record.leaf(closed_adjacency<T>(g));
  return record.matmul(hood, record.matmul(features, theta));
}

/// Diagnostic edge-list dump: one "i j cosine_similarity" line per edge.
void dump_edges(const SpectralGraph& g, std::ostream& out);

}  // namespace sgr
