#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "sgr/graph.hpp"
#include "sgr/spectral_graph.hpp"
#include "sgr/tensor.hpp"

namespace sgr {

/// Bundle produced by one pooling step and consumed by unpooling: the graph
/// it pooled, the kept indices (ascending original order), the gate scores
/// over all pre-pool nodes, and the gated k x C features.
struct LevelRecord {
  SpectralGraph graph_before_pool;
  SpectralGraph pooled_graph;
  std::vector<int64_t> indices;
  NodeId scores = -1;
  NodeId pooled = -1;
};

struct GruParamIds {
  NodeId wz = -1, uz = -1;
  NodeId wr = -1, ur = -1;
  NodeId wo = -1, uo = -1;
};

/// Feature pyramid X_0..X_L plus the pooling record of each step.
/// records[l] pooled level l features (graphs[l]) down to level l+1.
struct Hierarchy {
  std::vector<NodeId> features;
  std::vector<SpectralGraph> graphs;
  std::vector<LevelRecord> records;

  int64_t depth() const { return static_cast<int64_t>(records.size()); }
};

inline int64_t pool_size(int64_t n, double ratio) {
  return std::max<int64_t>(1, static_cast<int64_t>(std::ceil(ratio * static_cast<double>(n))));
}

/// Sigmoid projection scores s = sigma(X w), then the k nodes with the
/// largest scores (ties toward the lower index). Kept rows are gated by
/// their own scores; the pooled graph is the induced subgraph on the kept
/// set, so pooled nodes may become isolated.
template <typename T>
LevelRecord topk_pool(Graph<T>& record, const SpectralGraph& g, NodeId features,
                      NodeId projection, int64_t k) {
  const TensorT<T>& x = record.value(features);
  if (x.rank() != 2 || x.extent(0) != g.n)
    throw DimensionError("topk_pool: features must be n x C over the graph nodes");
  const int64_t n = x.extent(0);
  const int64_t width = x.extent(1);
  if (record.value(projection).size() != width)
    throw DimensionError("topk_pool: projection width " +
                         std::to_string(record.value(projection).size()) +
                         " != feature width " + std::to_string(width));
  if (k < 1 || k > n)
    throw ParameterError("topk_pool: k=" + std::to_string(k) + " out of range [1, " +
                         std::to_string(n) + "]");

  const NodeId proj_col = record.reshape(projection, {width, 1});
  const NodeId scores =
      record.sigmoid(record.reshape(record.matmul(features, proj_col), {n}));

  const TensorT<T>& s = record.value(scores);
  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    if (s[a] != s[b]) return s[a] > s[b];
    return a < b;
  });
  std::vector<int64_t> keep(order.begin(), order.begin() + k);
  std::sort(keep.begin(), keep.end());

  LevelRecord level;
  level.graph_before_pool = g;
  level.pooled_graph = induced_subgraph(g, keep);
  level.scores = scores;
  level.pooled =
      record.scale_rows(record.gather_rows(features, keep), record.gather_rows(scores, keep));
  level.indices = std::move(keep);
  return level;
}

/// Scatter coarse rows back to their recorded positions in an n x C zero
/// matrix, then run message passing on the pre-pool graph to refill the
/// dropped nodes from their neighborhoods.
template <typename T>
NodeId graph_unpool(Graph<T>& record, NodeId coarse, const LevelRecord& level,
                    NodeId theta) {
  const TensorT<T>& h = record.value(coarse);
  if (h.rank() != 2 || h.extent(0) != static_cast<int64_t>(level.indices.size()))
    throw DimensionError("graph_unpool: expected " +
                         std::to_string(level.indices.size()) + " coarse rows, got " +
                         shape_str(h.shape()));
  const NodeId spread = record.scatter_rows(coarse, level.indices, level.graph_before_pool.n);
  return message_passing(record, level.graph_before_pool, spread, theta);
}

/// Gated fusion of the current level's features with the unpooled hidden
/// state; all six matrices are C x C and right-multiply row features.
template <typename T>
NodeId gru_step(Graph<T>& record, NodeId x, NodeId h_prev, const GruParamIds& p) {
  if (!record.value(x).same_shape(record.value(h_prev)))
    throw DimensionError("gru_step: state shape " +
                         shape_str(record.value(h_prev).shape()) + " != input shape " +
                         shape_str(record.value(x).shape()));
  const NodeId z =
      record.sigmoid(record.add(record.matmul(x, p.wz), record.matmul(h_prev, p.uz)));
  const NodeId r =
      record.sigmoid(record.add(record.matmul(x, p.wr), record.matmul(h_prev, p.ur)));
  const NodeId candidate = record.tanh(
      record.add(record.matmul(x, p.wo), record.matmul(record.hadamard(r, h_prev), p.uo)));
  const NodeId retain = record.hadamard(record.scale_add(z, T(-1), T(1)), h_prev);
  return record.add(retain, record.hadamard(z, candidate));
}

/// Recurrent fusion over the pyramid: h starts at the coarsest features and
/// is alternately unpooled one level and blended with that level's features,
/// ending at level-0 size. thetas[l-1] drives the l-th unpool.
template <typename T>
NodeId ensemble(Graph<T>& record, const Hierarchy& hier, const std::vector<NodeId>& thetas,
                const GruParamIds& gru) {
  const int64_t depth = hier.depth();
  if (depth < 1) throw StructureError("ensemble: hierarchy depth must be >= 1");
  if (hier.features.size() != static_cast<size_t>(depth) + 1 ||
      hier.graphs.size() != static_cast<size_t>(depth) + 1)
    throw StructureError("ensemble: hierarchy has inconsistent level counts");
  if (thetas.size() != static_cast<size_t>(depth))
    throw StructureError("ensemble: need one message-passing matrix per level");
  for (int64_t l = 0; l < depth; ++l) {
    const int64_t coarse = record.value(hier.features[static_cast<size_t>(l) + 1]).extent(0);
    const int64_t fine = record.value(hier.features[static_cast<size_t>(l)]).extent(0);
    if (coarse >= fine)
      throw StructureError("ensemble: node counts must strictly decrease, got " +
                           std::to_string(fine) + " -> " + std::to_string(coarse) +
                           " at level " + std::to_string(l + 1));
  }

  NodeId hidden = hier.features[static_cast<size_t>(depth)];
  for (int64_t l = 1; l <= depth; ++l) {
    const LevelRecord& level = hier.records[static_cast<size_t>(depth - l)];
    const NodeId spread = graph_unpool(record, hidden, level, thetas[static_cast<size_t>(l - 1)]);
    hidden = gru_step(record, hier.features[static_cast<size_t>(depth - l)], spread, gru);
  }
  return hidden;
}

}  // namespace sgr
