#include "sgr/gradcheck_suite.hpp"

#include <algorithm>

#include "sgr/model.hpp"
#include "sgr/pool.hpp"
#include "sgr/rng.hpp"
#include "sgr/spectral_graph.hpp"

namespace sgr {

namespace {

Tensor64 random_tensor(Shape shape, Rng& rng, double lo = -1.5, double hi = 1.5) {
  Tensor64 t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

GradCheckEntry check(std::string name, const ScalarFn& fn, std::vector<Tensor64> params) {
  return {std::move(name), grad_check(fn, std::move(params))};
}

// gcn -> pool -> gcn over a fixed random graph topology derived from the
// feature values themselves, as in the full model.
NodeId graph_composite(Graph<double>& g, const std::vector<NodeId>& ids, int64_t k) {
  const NodeId x = ids[0];
  const SpectralGraph graph = knn_graph(g.value(x), k);
  const NodeId h0 = gcn_layer(g, graph, x, ids[1], Activation::relu);
  const LevelRecord level =
      topk_pool(g, graph, h0, ids[2], pool_size(graph.n, 0.5));
  const NodeId h1 = gcn_layer(g, level.pooled_graph, level.pooled, ids[3], Activation::relu);
  return g.sum_all(h1);
}

}  // namespace

std::vector<GradCheckEntry> run_gradcheck_suite(GradCheckScale scale) {
  std::vector<GradCheckEntry> out;
  Rng rng(20240915);

  out.push_back(check(
      "identity",
      [](Graph<double>& g, const std::vector<NodeId>& ids) { return g.sum_all(ids[0]); },
      {random_tensor({4, 3}, rng)}));

  {
    // Closed form 2*A*x for symmetric A; quadratic form through the record.
    Tensor64 a = random_tensor({5, 5}, rng);
    for (int64_t i = 0; i < 5; ++i)
      for (int64_t j = 0; j < i; ++j) a.at(i, j) = a.at(j, i);
    out.push_back(check(
        "quadratic_form",
        [a](Graph<double>& g, const std::vector<NodeId>& ids) {
          const NodeId am = g.leaf(a);
          const NodeId xc = g.reshape(ids[0], {5, 1});
          const NodeId xr = g.reshape(ids[0], {1, 5});
          return g.sum_all(g.matmul(xr, g.matmul(am, xc)));
        },
        {random_tensor({5}, rng)}));
  }

  out.push_back(check(
      "matmul",
      [](Graph<double>& g, const std::vector<NodeId>& ids) {
        return g.sum_all(g.sigmoid(g.matmul(ids[0], ids[1])));
      },
      {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)}));

  {
    Conv3dSpec valid;
    out.push_back(check(
        "conv3d_valid",
        [valid](Graph<double>& g, const std::vector<NodeId>& ids) {
          return g.sum_all(g.tanh(g.conv3d(ids[0], ids[1], valid)));
        },
        {random_tensor({2, 5, 4, 4}, rng), random_tensor({3, 2, 3, 3, 3}, rng)}));

    Conv3dSpec dilated;
    dilated.pad = {PadMode::same, PadMode::same, PadMode::same};
    dilated.dilation = {2, 1, 1};
    out.push_back(check(
        "conv3d_dilated_same",
        [dilated](Graph<double>& g, const std::vector<NodeId>& ids) {
          return g.sum_all(g.tanh(g.conv3d(ids[0], ids[1], dilated)));
        },
        {random_tensor({2, 6, 3, 3}, rng), random_tensor({2, 2, 3, 3, 3}, rng)}));
  }

  out.push_back(check(
      "sigmoid",
      [](Graph<double>& g, const std::vector<NodeId>& ids) {
        return g.sum_all(g.sigmoid(ids[0]));
      },
      {random_tensor({3, 4}, rng)}));
  out.push_back(check(
      "tanh",
      [](Graph<double>& g, const std::vector<NodeId>& ids) {
        return g.sum_all(g.tanh(ids[0]));
      },
      {random_tensor({3, 4}, rng)}));
  out.push_back(check(
      "relu",
      [](Graph<double>& g, const std::vector<NodeId>& ids) {
        return g.sum_all(g.relu(ids[0]));
      },
      {random_tensor({3, 4}, rng)}));
  out.push_back(check(
      "hadamard_add_scale",
      [](Graph<double>& g, const std::vector<NodeId>& ids) {
        const NodeId h = g.hadamard(ids[0], ids[1]);
        return g.sum_all(g.scale_add(g.add(h, ids[1]), 0.5, -1.0));
      },
      {random_tensor({4, 3}, rng), random_tensor({4, 3}, rng)}));

  out.push_back(check(
      "rows_gather_scatter_concat",
      [](Graph<double>& g, const std::vector<NodeId>& ids) {
        const NodeId gated = g.scale_rows(ids[0], ids[1]);
        const NodeId picked = g.gather_rows(gated, {3, 1});
        const NodeId spread = g.scatter_rows(picked, {0, 4}, 5);
        const NodeId joined = g.concat({g.reshape(spread, {15}), g.reshape(picked, {6})});
        return g.sum_all(g.tanh(joined));
      },
      {random_tensor({5, 3}, rng), random_tensor({5}, rng)}));

  out.push_back(check(
      "softmax_cross_entropy",
      [](Graph<double>& g, const std::vector<NodeId>& ids) {
        return g.softmax_cross_entropy(g.reshape(ids[0], {6}), 2);
      },
      {random_tensor({6}, rng)}));

  out.push_back(check(
      "three_layer_composite",
      [](Graph<double>& g, const std::vector<NodeId>& ids) {
        const NodeId h1 = g.relu(g.matmul(ids[0], ids[1]));
        const NodeId h2 = g.tanh(g.matmul(h1, ids[2]));
        const NodeId logits = g.reshape(g.matmul(h2, ids[3]), {4});
        return g.softmax_cross_entropy(logits, 1);
      },
      {random_tensor({1, 6}, rng), random_tensor({6, 5}, rng), random_tensor({5, 5}, rng),
       random_tensor({5, 4}, rng)}));

  out.push_back(check(
      "gru_step",
      [](Graph<double>& g, const std::vector<NodeId>& ids) {
        GruParamIds p{ids[2], ids[3], ids[4], ids[5], ids[6], ids[7]};
        return g.sum_all(gru_step(g, ids[0], ids[1], p));
      },
      {random_tensor({4, 3}, rng), random_tensor({4, 3}, rng), random_tensor({3, 3}, rng),
       random_tensor({3, 3}, rng), random_tensor({3, 3}, rng), random_tensor({3, 3}, rng),
       random_tensor({3, 3}, rng), random_tensor({3, 3}, rng)}));

  out.push_back(check(
      "gcn_pool_gcn",
      [](Graph<double>& g, const std::vector<NodeId>& ids) {
        return graph_composite(g, ids, 3);
      },
      {random_tensor({8, 4}, rng, 0.2, 1.8), random_tensor({4, 4}, rng),
       random_tensor({4}, rng), random_tensor({4, 4}, rng)}));

  if (scale == GradCheckScale::tiny) return out;

  {
    // Decouple -> ensemble on a 6-node, C=4, depth-2 pyramid.
    const Tensor64 base = random_tensor({6, 4}, rng, 0.2, 1.8);
    out.push_back(check(
        "decouple_ensemble_l2",
        [base](Graph<double>& g, const std::vector<NodeId>& ids) {
          const NodeId x = g.leaf(base);
          const SpectralGraph g0 = knn_graph(base, 2);
          Hierarchy hier;
          hier.features.push_back(gcn_layer(g, g0, x, ids[0], Activation::relu));
          hier.graphs.push_back(g0);
          for (int64_t level = 1; level <= 2; ++level) {
            const SpectralGraph& prev = hier.graphs.back();
            LevelRecord rec = topk_pool(g, prev, hier.features.back(),
                                        ids[static_cast<size_t>(level)],
                                        pool_size(prev.n, 0.5));
            hier.graphs.push_back(rec.pooled_graph);
            hier.features.push_back(rec.pooled);
            hier.records.push_back(std::move(rec));
          }
          GruParamIds p{ids[5], ids[6], ids[7], ids[8], ids[9], ids[10]};
          const NodeId fused = ensemble(g, hier, {ids[3], ids[4]}, p);
          return g.sum_all(g.tanh(fused));
        },
        {random_tensor({4, 4}, rng), random_tensor({4}, rng), random_tensor({4}, rng),
         random_tensor({4, 4}, rng), random_tensor({4, 4}, rng), random_tensor({4, 4}, rng),
         random_tensor({4, 4}, rng), random_tensor({4, 4}, rng), random_tensor({4, 4}, rng),
         random_tensor({4, 4}, rng), random_tensor({4, 4}, rng)}));
  }

  {
    // Miniature complete model: every trainable tensor checked end to end.
    ModelConfig cfg;
    cfg.bands = 16;
    cfg.patch = 3;
    cfg.features = 4;
    cfg.knn_k = 3;
    cfg.levels = 1;
    cfg.pool_ratio = 0.5;
    cfg.classes = 3;
    const SgrModelT<double> model(cfg, 42);
    Rng data_rng(99);
    Tensor64 patch({1, cfg.bands, cfg.patch, cfg.patch});
    for (int64_t i = 0; i < patch.size(); ++i) patch[i] = data_rng.uniform();
    std::vector<Tensor64> params;
    for (int64_t i = 0; i < model.params().count(); ++i)
      params.push_back(model.params().value(i));
    out.push_back(check(
        "sgr_forward_tiny",
        [&model, patch](Graph<double>& g, const std::vector<NodeId>& ids) {
          const NodeId input = g.leaf(patch);
          const NodeId logits = model.forward(g, ids, input);
          return g.softmax_cross_entropy(logits, 1);
        },
        std::move(params)));
  }

  if (scale == GradCheckScale::small) return out;

  {
    // Depth-2 miniature model with two GCN layers per level.
    ModelConfig cfg;
    cfg.bands = 18;
    cfg.patch = 3;
    cfg.features = 4;
    cfg.knn_k = 3;
    cfg.levels = 2;
    cfg.pool_ratio = 0.5;
    cfg.gcn_layers_per_level = 2;
    cfg.classes = 4;
    const SgrModelT<double> model(cfg, 43);
    Rng data_rng(100);
    Tensor64 patch({1, cfg.bands, cfg.patch, cfg.patch});
    for (int64_t i = 0; i < patch.size(); ++i) patch[i] = data_rng.uniform();
    std::vector<Tensor64> params;
    for (int64_t i = 0; i < model.params().count(); ++i)
      params.push_back(model.params().value(i));
    out.push_back(check(
        "sgr_forward_l2",
        [&model, patch](Graph<double>& g, const std::vector<NodeId>& ids) {
          const NodeId input = g.leaf(patch);
          const NodeId logits = model.forward(g, ids, input);
          return g.softmax_cross_entropy(logits, 0);
        },
        std::move(params)));
  }
  return out;
}

double worst_error(const std::vector<GradCheckEntry>& entries) {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.max_rel_err);
  return worst;
}

}  // namespace sgr
