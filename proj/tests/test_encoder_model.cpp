#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "sgr/encoder.hpp"
#include "sgr/gradcheck.hpp"
#include "sgr/model.hpp"
#include "sgr/rng.hpp"

using namespace sgr;

namespace {

Tensor random_patch(const ModelConfig& cfg, uint64_t seed) {
  Rng rng(seed);
  Tensor t({1, cfg.bands, cfg.patch, cfg.patch});
  for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.uniform());
  return t;
}

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.bands = 16;
  cfg.patch = 3;
  cfg.features = 4;
  cfg.knn_k = 3;
  cfg.levels = 1;
  cfg.classes = 3;
  return cfg;
}

}  // namespace

TEST_SUITE("encoder-model") {

TEST_CASE("encode shape arithmetic for the 103-band configuration") {
  ModelConfig cfg;
  cfg.bands = 103;
  cfg.features = 8;
  cfg.classes = 9;
  cfg.knn_k = 10;
  CHECK(cfg.spectral_out() == 89);
  CHECK(cfg.node_count() == 712);
  CHECK(cfg.node_width() == 49);

  SgrModel model(cfg, 5);
  GraphF rec;
  const auto p = model.bind(rec, false);
  const NodeId out = model.encode_input(rec, p, rec.leaf(random_patch(cfg, 1)));
  CHECK(rec.value(out).shape() == Shape{8, 89, 7, 7});
}

TEST_CASE("residual modules are exact identities with zero branch weights") {
  Rng rng(50);
  GraphF rec;
  Tensor x({4, 6, 5, 5});
  for (int64_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(rng.uniform(-2, 2));
  std::array<NodeId, kResidualPathCount> kernels;
  for (size_t path = 0; path < kResidualPathCount; ++path)
    kernels[path] = rec.leaf(
        Tensor({1, 4, kResidualSpectralExtents[path], 3, 3}));
  const NodeId out = residual_module(rec, rec.leaf(x), kernels);
  CHECK(rec.value(out) == x);
}

TEST_CASE("stem agrees with the nested-loop convolution oracle") {
  Rng rng(51);
  Tensor64 x({1, 20, 5, 5});
  for (int64_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1, 1);
  Tensor64 k({3, 1, 15, 3, 3});
  for (int64_t i = 0; i < k.size(); ++i) k[i] = rng.uniform(-0.3, 0.3);
  GraphD rec;
  const NodeId out = encoder_stem(rec, rec.leaf(x), rec.leaf(k));
  const Tensor64 want =
      oracle::conv3d(x, k, {PadMode::valid, PadMode::same, PadMode::same}, {1, 1, 1});
  CHECK(rec.value(out).max_abs_diff(want) < 1e-12);
}

TEST_CASE("configuration validation rejects module-precondition violations") {
  ModelConfig cfg = tiny_config();
  cfg.bands = 14;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
  cfg = tiny_config();
  cfg.features = 6;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
  cfg = tiny_config();
  cfg.knn_k = 8;  // N = 8 nodes, k must stay below
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
  cfg = tiny_config();
  cfg.pool_ratio = 1.0;  // pooling would not shrink the pyramid
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
  cfg = tiny_config();
  cfg.dense_cap = 4;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
  CHECK_NOTHROW(tiny_config().validate());
}

TEST_CASE("logits have the configured class count and are finite") {
  const ModelConfig cfg = tiny_config();
  SgrModel model(cfg, 7);
  for (uint64_t s = 0; s < 5; ++s) {
    const Tensor out = model.logits(random_patch(cfg, 100 + s));
    CHECK(out.shape() == Shape{3});
    CHECK(out.all_finite());
  }
}

TEST_CASE("bitwise-identical patches give bitwise-identical logits") {
  const ModelConfig cfg = tiny_config();
  SgrModel model(cfg, 8);
  const Tensor patch = random_patch(cfg, 9);
  CHECK(model.logits(patch) == model.logits(patch));
}

TEST_CASE("forward equals the scripted module-by-module composition oracle") {
  const ModelConfig cfg = tiny_config();
  SgrModelT<double> model(cfg, 11);
  Rng rng(52);
  Tensor64 patch({1, cfg.bands, cfg.patch, cfg.patch});
  for (int64_t i = 0; i < patch.size(); ++i) patch[i] = rng.uniform();

  GraphD rec;
  const auto p = model.bind(rec, false);
  const Tensor64 got = rec.value(model.forward(rec, p, rec.leaf(patch)));

  // Scripted pipeline from the primitives, step by step.
  GraphD s;
  const auto q = model.bind(s, false);
  const auto& params = model.params();
  const auto id = [&](const std::string& name) {
    return q[static_cast<size_t>(params.index(name))];
  };
  std::array<std::array<NodeId, kResidualPathCount>, 2> res;
  for (int m = 0; m < 2; ++m)
    for (int path = 0; path < kResidualPathCount; ++path)
      res[static_cast<size_t>(m)][static_cast<size_t>(path)] =
          id("encoder.res" + std::to_string(m + 1) + ".path" + std::to_string(path));
  const NodeId encoded = encode(s, s.leaf(patch), id("encoder.stem"), res);
  const int64_t n = cfg.node_count(), width = cfg.node_width();
  const NodeId nodes = s.reshape(encoded, {n, width});
  const SpectralGraph g0 = knn_graph(s.value(nodes), cfg.knn_k);
  const NodeId x0 = gcn_layer(s, g0, nodes, id("gcn.l0.w0"), Activation::relu);
  const LevelRecord level =
      topk_pool(s, g0, x0, id("pool.l1.score"), pool_size(g0.n, cfg.pool_ratio));
  const NodeId x1 =
      gcn_layer(s, level.pooled_graph, level.pooled, id("gcn.l1.w0"), Activation::relu);
  Hierarchy hier;
  hier.features = {x0, x1};
  hier.graphs = {g0, level.pooled_graph};
  hier.records = {level};
  GruParamIds gru{id("gru.wz"), id("gru.uz"), id("gru.wr"),
                  id("gru.ur"), id("gru.wo"), id("gru.uo")};
  const NodeId fused = ensemble(s, hier, {id("unpool.l1.theta")}, gru);
  const NodeId head = gcn_layer(s, g0, fused, id("head.w"), Activation::identity);
  const NodeId flat = s.reshape(
      s.concat({s.reshape(head, {n * width}), s.reshape(nodes, {n * width})}),
      {1, 2 * n * width});
  const NodeId scaled =
      s.scale(flat, 1.0 / std::sqrt(static_cast<double>(2 * n * width)));
  const NodeId logits = s.add(s.reshape(s.matmul(scaled, id("classifier.w")), {cfg.classes}),
                              id("classifier.b"));
  CHECK(got.max_abs_diff(s.value(logits)) == 0.0);
}

TEST_CASE("parameter count is a pure function of the configuration") {
  const ModelConfig cfg = tiny_config();
  SgrModel a(cfg, 1);
  SgrModel b(cfg, 999);
  CHECK(a.params().scalar_count() == b.params().scalar_count());
  CHECK(a.params().count() == b.params().count());

  ModelConfig wider = cfg;
  wider.features = 8;
  wider.knn_k = 5;
  SgrModel c(wider, 1);
  CHECK(c.params().scalar_count() > a.params().scalar_count());

  ModelConfig baseline = cfg;
  baseline.kind = ModelKind::encoder_only;
  SgrModel d(baseline, 1);
  CHECK(d.params().scalar_count() < a.params().scalar_count());
}

TEST_CASE("batch gradients: saturated correct logit gives ~zero loss and gradient") {
  const ModelConfig cfg = tiny_config();
  SgrModel model(cfg, 13);
  const Tensor patch = random_patch(cfg, 14);
  const int64_t label = model.predict(patch);
  // Drive the winning logit far above the others through the bias.
  model.params().value(model.params().index("classifier.b"))[label] = 80.0f;
  std::vector<Tensor> grads;
  const double loss = batch_gradients(model, {patch}, {label}, grads);
  CHECK(loss < 1e-6);
  double norm = 0.0;
  for (const auto& g : grads)
    for (int64_t c = 0; c < g.size(); ++c) norm += static_cast<double>(g[c]) * g[c];
  CHECK(std::sqrt(norm) < 1e-5);
}

TEST_CASE("batch gradients: duplicated sample matches the single sample") {
  const ModelConfig cfg = tiny_config();
  SgrModel model(cfg, 15);
  const Tensor patch = random_patch(cfg, 16);
  std::vector<Tensor> g1, g2;
  const double l1 = batch_gradients(model, {patch}, {1}, g1);
  const double l2 = batch_gradients(model, {patch, patch}, {1, 1}, g2);
  CHECK(l1 == doctest::Approx(l2).epsilon(1e-12));
  for (size_t i = 0; i < g1.size(); ++i) CHECK(g1[i].max_abs_diff(g2[i]) < 1e-7);
}

TEST_CASE("batch gradients validate labels and batch shape") {
  const ModelConfig cfg = tiny_config();
  SgrModel model(cfg, 17);
  const Tensor patch = random_patch(cfg, 18);
  std::vector<Tensor> grads;
  CHECK_THROWS_AS(batch_gradients(model, {}, {}, grads), ParameterError);
  CHECK_THROWS_AS(batch_gradients(model, {patch}, {3}, grads), ParameterError);
}

TEST_CASE("fixed-thread-count gradient reduction is deterministic") {
  const ModelConfig cfg = tiny_config();
  SgrModel model(cfg, 19);
  std::vector<Tensor> patches;
  std::vector<int64_t> labels;
  for (uint64_t s = 0; s < 6; ++s) {
    patches.push_back(random_patch(cfg, 200 + s));
    labels.push_back(static_cast<int64_t>(s % 3));
  }
  std::vector<Tensor> a, b, c, d;
  const double la = batch_gradients(model, patches, labels, a, 1);
  const double lb = batch_gradients(model, patches, labels, b, 1);
  CHECK(la == lb);
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  // Concurrent workers with the same count reduce in a fixed order too.
  const double lc = batch_gradients(model, patches, labels, c, 3);
  const double ld = batch_gradients(model, patches, labels, d, 3);
  CHECK(lc == ld);
  for (size_t i = 0; i < c.size(); ++i) CHECK(c[i] == d[i]);
}

TEST_CASE("checkpointed parameters reproduce the same model function") {
  const ModelConfig cfg = tiny_config();
  SgrModel model(cfg, 21);
  SgrModel clone(cfg, model.params());
  const Tensor patch = random_patch(cfg, 22);
  CHECK(model.logits(patch) == clone.logits(patch));
}

}  // TEST_SUITE
