#pragma once

#include <array>
#include <cstdint>
#include <exception>
#include <string>
#include <thread>
#include <vector>

#include "sgr/encoder.hpp"
#include "sgr/graph.hpp"
#include "sgr/params.hpp"
#include "sgr/pool.hpp"
#include "sgr/spectral_graph.hpp"
#include "sgr/tensor.hpp"

namespace sgr {

enum class ModelKind { sgr, encoder_only };

inline const char* to_string(ModelKind kind) {
  return kind == ModelKind::sgr ? "sgr" : "encoder-only";
}

/// Architecture hyperparameters. Every derived quantity (node count, feature
/// width, level sizes, parameter count) is a pure function of these fields.
struct ModelConfig {
  int64_t bands = 103;
  int64_t patch = 7;
  int64_t features = 8;  // encoder channels F, split across 4 residual paths
  int64_t knn_k = 10;
  int64_t levels = 2;
  double pool_ratio = 0.5;
  int64_t gcn_layers_per_level = 1;
  int64_t classes = 9;
  int64_t dense_cap = 4096;
  ModelKind kind = ModelKind::sgr;

  int64_t spectral_out() const { return bands - kStemSpectralExtent + 1; }
  int64_t node_count() const { return features * spectral_out(); }
  int64_t node_width() const { return patch * patch; }

  /// Node counts of pyramid levels 0..levels.
  std::vector<int64_t> level_sizes() const {
    std::vector<int64_t> sizes{node_count()};
    for (int64_t l = 0; l < levels; ++l) sizes.push_back(pool_size(sizes.back(), pool_ratio));
    return sizes;
  }

  void validate() const {
    if (bands < kStemSpectralExtent)
      throw ParameterError("config: bands must be >= " +
                           std::to_string(kStemSpectralExtent) + ", got " +
                           std::to_string(bands));
    if (patch < 1 || patch % 2 == 0)
      throw ParameterError("config: patch must be odd and positive, got " +
                           std::to_string(patch));
    if (features < 4 || features % 4 != 0)
      throw ParameterError("config: features must be a positive multiple of 4, got " +
                           std::to_string(features));
    if (classes < 2) throw ParameterError("config: need at least 2 classes");
    if (pool_ratio <= 0.0 || pool_ratio > 1.0)
      throw ParameterError("config: pool_ratio must be in (0, 1]");
    if (gcn_layers_per_level < 1)
      throw ParameterError("config: gcn_layers_per_level must be >= 1");
    if (kind == ModelKind::sgr) {
      if (levels < 1) throw ParameterError("config: levels must be >= 1");
      const int64_t n = node_count();
      if (knn_k < 1 || knn_k >= n)
        throw ParameterError("config: knn_k must be in [1, " + std::to_string(n) +
                             "), got " + std::to_string(knn_k));
      if (n > dense_cap)
        throw ParameterError("config: " + std::to_string(n) +
                             " graph nodes exceed dense_cap " + std::to_string(dense_cap));
      const auto sizes = level_sizes();
      for (size_t l = 1; l < sizes.size(); ++l)
        if (sizes[l] >= sizes[l - 1])
          throw ParameterError("config: pooling does not shrink level " +
                               std::to_string(l - 1) + " (" + std::to_string(sizes[l - 1]) +
                               " -> " + std::to_string(sizes[l]) +
                               "); lower pool_ratio or levels");
    }
  }
};

/// The classifier consumes the flattened head features concatenated with the
/// flattened encoder map for the full model, or the encoder map alone for
/// the encoder-only baseline.
inline int64_t classifier_width(const ModelConfig& cfg) {
  const int64_t flat = cfg.node_count() * cfg.node_width();
  return cfg.kind == ModelKind::sgr ? 2 * flat : flat;
}

namespace detail {

/// Parameter indices into the canonical registration order.
struct ParamLayout {
  int64_t stem = -1;
  std::array<std::array<int64_t, kResidualPathCount>, 2> res{};
  std::vector<std::vector<int64_t>> gcn;  // [level][layer]
  std::vector<int64_t> proj;              // per pooling level, size L
  std::vector<int64_t> theta;             // per unpool level, size L
  std::array<int64_t, 6> gru{};           // wz uz wr ur wo uo
  int64_t head = -1;
  int64_t cls_w = -1;
  int64_t cls_b = -1;
};

}  // namespace detail

/// The full model: dilated 3-D convolutional encoder, per-sample spectral
/// KNN-graph reasoning pyramid, recurrent gated ensembling, classifier head.
template <typename T>
class SgrModelT {
 public:
  SgrModelT(ModelConfig cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    init_params(rng);
    build_layout();
  }

  SgrModelT(ModelConfig cfg, ParamSet<T> params) : cfg_(cfg), params_(std::move(params)) {
    cfg_.validate();
    build_layout();
  }

  const ModelConfig& config() const { return cfg_; }
  ParamSet<T>& params() { return params_; }
  const ParamSet<T>& params() const { return params_; }

  /// Registers every parameter as a leaf on the record, in canonical order.
  std::vector<NodeId> bind(Graph<T>& record, bool trainable) const {
    std::vector<NodeId> ids;
    ids.reserve(static_cast<size_t>(params_.count()));
    for (int64_t i = 0; i < params_.count(); ++i)
      ids.push_back(record.leaf(params_.value(i), trainable));
    return ids;
  }

  NodeId encode_input(Graph<T>& record, const std::vector<NodeId>& p, NodeId input) const {
    std::array<std::array<NodeId, kResidualPathCount>, 2> res_ids;
    for (int m = 0; m < 2; ++m)
      for (int path = 0; path < kResidualPathCount; ++path)
        res_ids[static_cast<size_t>(m)][static_cast<size_t>(path)] =
            p[static_cast<size_t>(layout_.res[static_cast<size_t>(m)][static_cast<size_t>(path)])];
    return encode(record, input, p[static_cast<size_t>(layout_.stem)], res_ids);
  }

  /// Forward pass from an input leaf (1 x B x patch x patch) to K logits.
  /// `level_sizes_out`, when given, receives the realized pyramid sizes.
  NodeId forward(Graph<T>& record, const std::vector<NodeId>& p, NodeId input,
                 std::vector<int64_t>* level_sizes_out = nullptr) const {
    const TensorT<T>& in = record.value(input);
    if (in.rank() != 4 || in.extent(0) != 1 || in.extent(1) != cfg_.bands ||
        in.extent(2) != cfg_.patch || in.extent(3) != cfg_.patch)
      throw DimensionError("forward: expected input 1x" + std::to_string(cfg_.bands) + "x" +
                           std::to_string(cfg_.patch) + "x" + std::to_string(cfg_.patch) +
                           ", got " + shape_str(in.shape()));
    // The classifier input is scaled by 1/sqrt(width) so logit-space SGD
    // steps stay O(lr) regardless of how many features are concatenated.
    const T cls_scale = T(1) / std::sqrt(static_cast<T>(classifier_width(cfg_)));
    const NodeId encoded = encode_input(record, p, input);
    const int64_t n = cfg_.node_count();
    const int64_t width = cfg_.node_width();
    const NodeId node_features = record.reshape(encoded, {n, width});

    NodeId flat;  // classifier input
    if (cfg_.kind == ModelKind::encoder_only) {
      flat = record.reshape(node_features, {1, n * width});
      if (level_sizes_out != nullptr) level_sizes_out->assign(1, n);
    } else {
      // Graph structure is built from forward values; gradients flow through
      // features, never through edge selection.
      const SpectralGraph g0 = knn_graph(record.value(node_features), cfg_.knn_k);

      Hierarchy hier;
      NodeId x = node_features;
      for (int64_t layer = 0; layer < cfg_.gcn_layers_per_level; ++layer)
        x = gcn_layer(record, g0, x,
                      p[static_cast<size_t>(layout_.gcn[0][static_cast<size_t>(layer)])],
                      Activation::relu);
      hier.features.push_back(x);
      hier.graphs.push_back(g0);

      for (int64_t level = 1; level <= cfg_.levels; ++level) {
        const SpectralGraph& prev = hier.graphs.back();
        const int64_t k = pool_size(prev.n, cfg_.pool_ratio);
        LevelRecord rec = topk_pool(record, prev, hier.features.back(),
                                    p[static_cast<size_t>(layout_.proj[static_cast<size_t>(level - 1)])], k);
        NodeId pooled = rec.pooled;
        for (int64_t layer = 0; layer < cfg_.gcn_layers_per_level; ++layer)
          pooled = gcn_layer(
              record, rec.pooled_graph, pooled,
              p[static_cast<size_t>(layout_.gcn[static_cast<size_t>(level)][static_cast<size_t>(layer)])],
              Activation::relu);
        hier.graphs.push_back(rec.pooled_graph);
        hier.records.push_back(std::move(rec));
        hier.features.push_back(pooled);
      }

      if (level_sizes_out != nullptr) {
        level_sizes_out->clear();
        for (const auto& g : hier.graphs) level_sizes_out->push_back(g.n);
      }

      std::vector<NodeId> thetas;
      for (int64_t level = 0; level < cfg_.levels; ++level)
        thetas.push_back(p[static_cast<size_t>(layout_.theta[static_cast<size_t>(level)])]);
      GruParamIds gru;
      gru.wz = p[static_cast<size_t>(layout_.gru[0])];
      gru.uz = p[static_cast<size_t>(layout_.gru[1])];
      gru.wr = p[static_cast<size_t>(layout_.gru[2])];
      gru.ur = p[static_cast<size_t>(layout_.gru[3])];
      gru.wo = p[static_cast<size_t>(layout_.gru[4])];
      gru.uo = p[static_cast<size_t>(layout_.gru[5])];
      const NodeId fused = ensemble(record, hier, thetas, gru);
      const NodeId head = gcn_layer(record, g0, fused, p[static_cast<size_t>(layout_.head)],
                                    Activation::identity);
      flat = record.reshape(
          record.concat({record.reshape(head, {n * width}),
                         record.reshape(node_features, {n * width})}),
          {1, 2 * n * width});
    }

    const NodeId scores =
        record.matmul(record.scale(flat, cls_scale), p[static_cast<size_t>(layout_.cls_w)]);
    return record.add(record.reshape(scores, {cfg_.classes}),
                      p[static_cast<size_t>(layout_.cls_b)]);
  }

  /// Convenience single-sample inference on a fresh record.
  TensorT<T> logits(const TensorT<T>& patch) const {
    Graph<T> record;
    const auto p = bind(record, false);
    const NodeId out = forward(record, p, record.leaf(patch));
    return record.value(out);
  }

  int64_t predict(const TensorT<T>& patch) const {
    const TensorT<T> out = logits(patch);
    int64_t best = 0;
    for (int64_t i = 1; i < out.size(); ++i)
      if (out[i] > out[best]) best = i;
    return best;
  }

 private:
  void init_params(Rng& rng) {
    const int64_t f = cfg_.features;
    params_.add("encoder.stem",
                fan_in_uniform<T>({f, 1, kStemSpectralExtent, 3, 3},
                                  kStemSpectralExtent * 3 * 3, rng));
    for (int m = 1; m <= 2; ++m)
      for (int path = 0; path < kResidualPathCount; ++path) {
        const int64_t kd = kResidualSpectralExtents[static_cast<size_t>(path)];
        params_.add("encoder.res" + std::to_string(m) + ".path" + std::to_string(path),
                    fan_in_uniform<T>({f / 4, f, kd, 3, 3}, f * kd * 3 * 3, rng));
      }
    const int64_t width = cfg_.node_width();
    if (cfg_.kind == ModelKind::sgr) {
      for (int64_t level = 0; level <= cfg_.levels; ++level)
        for (int64_t layer = 0; layer < cfg_.gcn_layers_per_level; ++layer)
          params_.add("gcn.l" + std::to_string(level) + ".w" + std::to_string(layer),
                      fan_in_uniform<T>({width, width}, width, rng));
      for (int64_t level = 1; level <= cfg_.levels; ++level)
        params_.add("pool.l" + std::to_string(level) + ".score",
                    fan_in_uniform<T>({width}, width, rng));
      // Each unpooled coordinate sums width inputs per closed-neighborhood
      // member, so the message-passing fan-in includes the expected
      // neighborhood size.
      for (int64_t level = 1; level <= cfg_.levels; ++level)
        params_.add("unpool.l" + std::to_string(level) + ".theta",
                    fan_in_uniform<T>({width, width}, width * (cfg_.knn_k + 1), rng));
      for (const char* gate : {"wz", "uz", "wr", "ur", "wo", "uo"})
        params_.add(std::string("gru.") + gate, fan_in_uniform<T>({width, width}, width, rng));
      params_.add("head.w", fan_in_uniform<T>({width, width}, width, rng));
    }
    // The 1/sqrt(width) input scaling in forward() leaves the classifier with
    // an effective fan-in of one unit-variance input.
    const int64_t cls_in = classifier_width(cfg_);
    params_.add("classifier.w", fan_in_uniform<T>({cls_in, cfg_.classes}, 1, rng));
    params_.add("classifier.b", TensorT<T>({cfg_.classes}));
  }

  void build_layout() {
    layout_.stem = params_.index("encoder.stem");
    for (int m = 0; m < 2; ++m)
      for (int path = 0; path < kResidualPathCount; ++path)
        layout_.res[static_cast<size_t>(m)][static_cast<size_t>(path)] = params_.index(
            "encoder.res" + std::to_string(m + 1) + ".path" + std::to_string(path));
    if (cfg_.kind == ModelKind::sgr) {
      layout_.gcn.assign(static_cast<size_t>(cfg_.levels) + 1, {});
      for (int64_t level = 0; level <= cfg_.levels; ++level)
        for (int64_t layer = 0; layer < cfg_.gcn_layers_per_level; ++layer)
          layout_.gcn[static_cast<size_t>(level)].push_back(params_.index(
              "gcn.l" + std::to_string(level) + ".w" + std::to_string(layer)));
      for (int64_t level = 1; level <= cfg_.levels; ++level)
        layout_.proj.push_back(params_.index("pool.l" + std::to_string(level) + ".score"));
      for (int64_t level = 1; level <= cfg_.levels; ++level)
        layout_.theta.push_back(params_.index("unpool.l" + std::to_string(level) + ".theta"));
      const std::array<const char*, 6> gates{"wz", "uz", "wr", "ur", "wo", "uo"};
      for (size_t i = 0; i < gates.size(); ++i)
        layout_.gru[i] = params_.index(std::string("gru.") + gates[i]);
      layout_.head = params_.index("head.w");
    }
    layout_.cls_w = params_.index("classifier.w");
    layout_.cls_b = params_.index("classifier.b");
    const int64_t cls_in = classifier_width(cfg_);
    if (params_.value(layout_.cls_w).shape() != Shape{cls_in, cfg_.classes})
      throw ParameterError("classifier shape does not match the configuration");
  }

  ModelConfig cfg_;
  ParamSet<T> params_;
  detail::ParamLayout layout_;
};

using SgrModel = SgrModelT<float>;

/// Mean cross-entropy over a batch plus per-parameter gradients (accumulated
/// into `grads`, which is resized and zeroed). Per-sample gradients are
/// reduced in sample order within each worker and worker partials are merged
/// in worker order, so results are deterministic for a fixed thread count.
template <typename T>
double batch_gradients(const SgrModelT<T>& model, const std::vector<TensorT<T>>& patches,
                       const std::vector<int64_t>& labels, std::vector<TensorT<T>>& grads,
                       int threads = 1) {
  if (patches.empty() || patches.size() != labels.size())
    throw ParameterError("batch_gradients: batch must be non-empty with one label per patch");
  const int64_t n_params = model.params().count();
  const size_t batch = patches.size();
  const size_t workers =
      std::max<size_t>(1, std::min<size_t>(static_cast<size_t>(std::max(threads, 1)), batch));

  std::vector<std::vector<TensorT<T>>> partial(workers);
  std::vector<double> partial_loss(workers, 0.0);
  std::vector<std::exception_ptr> errors(workers);

  const auto run_range = [&](size_t w, size_t begin, size_t end) {
    try {
      auto& acc = partial[w];
      acc.resize(static_cast<size_t>(n_params));
      for (int64_t i = 0; i < n_params; ++i)
        acc[static_cast<size_t>(i)] = TensorT<T>(model.params().value(i).shape());
      for (size_t s = begin; s < end; ++s) {
        Graph<T> record;
        const auto p = model.bind(record, true);
        const NodeId input = record.leaf(patches[s]);
        const NodeId out = model.forward(record, p, input);
        const NodeId loss = record.softmax_cross_entropy(out, labels[s]);
        if (!record.value(loss).all_finite())
          throw ParameterError("batch_gradients: non-finite loss at sample " +
                               std::to_string(s));
        partial_loss[w] += static_cast<double>(record.value(loss)[0]);
        record.backward(loss);
        for (int64_t i = 0; i < n_params; ++i) {
          const TensorT<T> g = record.grad(p[static_cast<size_t>(i)]);
          TensorT<T>& slot = acc[static_cast<size_t>(i)];
          for (int64_t c = 0; c < g.size(); ++c) slot[c] += g[c];
        }
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };

  if (workers == 1) {
    run_range(0, 0, batch);
  } else {
    std::vector<std::thread> pool;
    const size_t chunk = (batch + workers - 1) / workers;
    for (size_t w = 0; w < workers; ++w) {
      const size_t begin = w * chunk;
      const size_t end = std::min(batch, begin + chunk);
      pool.emplace_back([&run_range, w, begin, end] { run_range(w, begin, end); });
    }
    for (auto& t : pool) t.join();
  }
  for (const auto& err : errors)
    if (err) std::rethrow_exception(err);

  grads.assign(static_cast<size_t>(n_params), TensorT<T>());
  const T inv = T(1) / static_cast<T>(batch);
  for (int64_t i = 0; i < n_params; ++i) {
    TensorT<T> sum(model.params().value(i).shape());
    for (size_t w = 0; w < workers; ++w) {
      if (partial[w].empty()) continue;
      const TensorT<T>& part = partial[w][static_cast<size_t>(i)];
      for (int64_t c = 0; c < sum.size(); ++c) sum[c] += part[c];
    }
    for (int64_t c = 0; c < sum.size(); ++c) sum[c] *= inv;
    grads[static_cast<size_t>(i)] = std::move(sum);
  }
  double loss = 0.0;
  for (const double l : partial_loss) loss += l;
  return loss / static_cast<double>(batch);
}

}  // namespace sgr
