#include <doctest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "sgr/gradcheck.hpp"
#include "sgr/pool.hpp"
#include "sgr/rng.hpp"
#include "sgr/spectral_graph.hpp"

using namespace sgr;

namespace {

Tensor64 random_features(int64_t n, int64_t c, Rng& rng, double lo = -1.0,
                         double hi = 1.0) {
  Tensor64 t({n, c});
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_SUITE("spectral-graph") {

TEST_CASE("knn: two nodes share the single candidate edge") {
  const Tensor64 f({2, 3}, {1, 0, 0, 0, 1, 0});
  const SpectralGraph g = knn_graph(f, 1);
  REQUIRE(g.edges.size() == 1);
  CHECK(g.edges[0] == std::pair<int64_t, int64_t>{0, 1});
  CHECK(g.degrees == std::vector<int64_t>{1, 1});
}

TEST_CASE("knn: identical rows are mutually nearest at distance zero") {
  Tensor64 f({5, 3}, {1, 2, 3,
                      -1, 0, 2,
                      1, 2, 3,
                      0, 5, 1,
                      2, -2, 0});
  const SpectralGraph g = knn_graph(f, 1);
  CHECK(g.has_edge(0, 2));
}

TEST_CASE("knn: parameter validation and self-exclusion") {
  Rng rng(21);
  const Tensor64 f = random_features(4, 3, rng);
  CHECK_THROWS_AS(knn_graph(f, 4), ParameterError);
  CHECK_THROWS_AS(knn_graph(f, 0), ParameterError);
  const SpectralGraph g = knn_graph(f, 2);
  for (int64_t i = 0; i < g.n; ++i) CHECK_FALSE(g.has_edge(i, i));
  for (const auto& [i, j] : g.edges) CHECK(i < j);
}

TEST_CASE("knn matches the exhaustive-pairwise oracle on 100 seeded instances") {
  Rng rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor64 f = random_features(8, 4, rng);
    const SpectralGraph g = knn_graph(f, 3);
    const auto want = oracle::knn_edges(f, 3);
    CHECK(g.edges == want);
    // Union symmetrization never drops a directed pick: out-degree >= k.
    for (int64_t i = 0; i < g.n; ++i)
      CHECK(g.degrees[static_cast<size_t>(i)] >= 3);
  }
}

TEST_CASE("laplacian of an edgeless graph is the identity") {
  SpectralGraph g = detail::graph_from_edges(4, {}, {});
  const Tensor64 lap = normalized_laplacian<double>(g);
  CHECK(lap == Tensor64::eye(4));
}

TEST_CASE("laplacian of the 3-cycle") {
  SpectralGraph g = detail::graph_from_edges(3, {{0, 1}, {0, 2}, {1, 2}}, {0, 0, 0});
  const Tensor64 lap = normalized_laplacian<double>(g);
  for (int64_t i = 0; i < 3; ++i) CHECK(lap.at(i, i) == doctest::Approx(1.0));
  CHECK(lap.at(0, 1) == doctest::Approx(-0.5));
  CHECK(lap.at(1, 2) == doctest::Approx(-0.5));
  CHECK(lap.at(0, 2) == doctest::Approx(-0.5));
}

TEST_CASE("laplacian dense cap is enforced") {
  SpectralGraph g = detail::graph_from_edges(10, {{0, 1}}, {0.5});
  CHECK_THROWS_AS(normalized_laplacian<double>(g, 8), ParameterError);
}

TEST_CASE("laplacian symmetry and Rayleigh bounds on random KNN graphs") {
  Rng rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const int64_t n = 6 + static_cast<int64_t>(rng.below(10));
    const Tensor64 f = random_features(n, 5, rng);
    const SpectralGraph g = knn_graph(f, 2 + static_cast<int64_t>(rng.below(3)));
    const Tensor64 lap = normalized_laplacian<double>(g);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < i; ++j) CHECK(lap.at(i, j) == lap.at(j, i));
    for (int vec = 0; vec < 50; ++vec) {
      std::vector<double> x(static_cast<size_t>(n));
      double norm = 0.0;
      for (auto& v : x) {
        v = rng.normal();
        norm += v * v;
      }
      norm = std::sqrt(norm);
      for (auto& v : x) v /= norm;
      double quad = 0.0;
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < n; ++j)
          quad += x[static_cast<size_t>(i)] * lap.at(i, j) * x[static_cast<size_t>(j)];
      CHECK(quad >= -1e-9);
      CHECK(quad <= 2.0 + 1e-9);
    }
  }
}

TEST_CASE("gcn: edgeless graph with identity weight and no activation is identity") {
  SpectralGraph g = detail::graph_from_edges(3, {}, {});
  GraphD rec;
  const Tensor64 x({3, 2}, {1, 2, 3, 4, 5, 6});
  const NodeId y = gcn_layer(rec, g, rec.leaf(x), rec.leaf(Tensor64::eye(2)),
                             Activation::identity);
  CHECK(rec.value(y).max_abs_diff(x) < 1e-15);
}

TEST_CASE("gcn on the 3-node path: hand-evaluated triple product") {
  SpectralGraph g = detail::graph_from_edges(3, {{0, 1}, {1, 2}}, {0, 0});
  GraphD rec;
  const NodeId y = gcn_layer(rec, g, rec.leaf(Tensor64({3, 1}, {1, 0, 0})),
                             rec.leaf(Tensor64({1, 1}, {1})), Activation::identity);
  const Tensor64& out = rec.value(y);
  CHECK(out[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(out[1] == doctest::Approx(1.0 / std::sqrt(6.0)).epsilon(1e-12));
  CHECK(out[2] == doctest::Approx(0.0));
}

TEST_CASE("gcn matches the dense oracle on random graphs") {
  Rng rng(24);
  for (int trial = 0; trial < 100; ++trial) {
    const int64_t n = 5 + static_cast<int64_t>(rng.below(8));
    const Tensor64 f = random_features(n, 4, rng);
    const SpectralGraph g = knn_graph(f, 2);
    const Tensor64 w = random_features(4, 3, rng);
    GraphD rec;
    const NodeId y = gcn_layer(rec, g, rec.leaf(f), rec.leaf(w), Activation::identity);
    CHECK(rec.value(y).max_abs_diff(oracle::gcn(g, f, w)) < 1e-6);
  }
}

TEST_CASE("gcn and message passing are permutation equivariant") {
  Rng rng(25);
  for (int trial = 0; trial < 20; ++trial) {
    const int64_t n = 6;
    const Tensor64 f = random_features(n, 3, rng);
    const SpectralGraph g = knn_graph(f, 2);
    const Tensor64 w = random_features(3, 3, rng);

    std::vector<int64_t> perm(static_cast<size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);  // perm[new] = old

    Tensor64 fp({n, 3});
    for (int64_t i = 0; i < n; ++i)
      for (int64_t c = 0; c < 3; ++c)
        fp.at(i, c) = f.at(perm[static_cast<size_t>(i)], c);
    std::vector<int64_t> inv(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) inv[static_cast<size_t>(perm[static_cast<size_t>(i)])] = i;
    std::vector<std::pair<int64_t, int64_t>> edges;
    for (const auto& [a, b] : g.edges) {
      const auto e = std::minmax(inv[static_cast<size_t>(a)], inv[static_cast<size_t>(b)]);
      edges.emplace_back(e.first, e.second);
    }
    std::sort(edges.begin(), edges.end());
    const SpectralGraph gp = detail::graph_from_edges(n, std::move(edges), {});

    GraphD r1, r2;
    const Tensor64& y = r1.value(gcn_layer(r1, g, r1.leaf(f), r1.leaf(w), Activation::relu));
    const Tensor64& yp =
        r2.value(gcn_layer(r2, gp, r2.leaf(fp), r2.leaf(w), Activation::relu));
    for (int64_t i = 0; i < n; ++i)
      for (int64_t c = 0; c < 3; ++c)
        CHECK(yp.at(i, c) ==
              doctest::Approx(y.at(perm[static_cast<size_t>(i)], c)).epsilon(1e-9));

    GraphD r3, r4;
    const Tensor64& m = r3.value(message_passing(r3, g, r3.leaf(f), r3.leaf(w)));
    const Tensor64& mp = r4.value(message_passing(r4, gp, r4.leaf(fp), r4.leaf(w)));
    for (int64_t i = 0; i < n; ++i)
      for (int64_t c = 0; c < 3; ++c)
        CHECK(mp.at(i, c) ==
              doctest::Approx(m.at(perm[static_cast<size_t>(i)], c)).epsilon(1e-9));
  }
}

TEST_CASE("gcn and message passing are linear in node features") {
  Rng rng(26);
  const Tensor64 x1 = random_features(7, 3, rng);
  const Tensor64 x2 = random_features(7, 3, rng);
  const SpectralGraph g = knn_graph(x1, 2);
  const Tensor64 w = random_features(3, 3, rng);
  const double a = 1.7, b = -0.6;

  Tensor64 combo({7, 3});
  for (int64_t i = 0; i < combo.size(); ++i) combo[i] = a * x1[i] + b * x2[i];

  GraphD r;
  const Tensor64& y_combo =
      r.value(gcn_layer(r, g, r.leaf(combo), r.leaf(w), Activation::identity));
  const Tensor64& y1 = r.value(gcn_layer(r, g, r.leaf(x1), r.leaf(w), Activation::identity));
  const Tensor64& y2 = r.value(gcn_layer(r, g, r.leaf(x2), r.leaf(w), Activation::identity));
  for (int64_t i = 0; i < y_combo.size(); ++i)
    CHECK(y_combo[i] == doctest::Approx(a * y1[i] + b * y2[i]).epsilon(1e-9));

  const Tensor64& m_combo = r.value(message_passing(r, g, r.leaf(combo), r.leaf(w)));
  const Tensor64& m1 = r.value(message_passing(r, g, r.leaf(x1), r.leaf(w)));
  const Tensor64& m2 = r.value(message_passing(r, g, r.leaf(x2), r.leaf(w)));
  for (int64_t i = 0; i < m_combo.size(); ++i)
    CHECK(m_combo[i] == doctest::Approx(a * m1[i] + b * m2[i]).epsilon(1e-9));
}

TEST_CASE("message passing: isolated node keeps only its own transform") {
  SpectralGraph g = detail::graph_from_edges(3, {{1, 2}}, {0.0});
  Rng rng(27);
  const Tensor64 h = random_features(3, 2, rng);
  const Tensor64 theta = random_features(2, 2, rng);
  GraphD rec;
  const Tensor64& out = rec.value(message_passing(rec, g, rec.leaf(h), rec.leaf(theta)));
  for (int64_t c = 0; c < 2; ++c) {
    double want = 0.0;
    for (int64_t p = 0; p < 2; ++p) want += h.at(0, p) * theta.at(p, c);
    CHECK(out.at(0, c) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("message passing: zero transform annihilates; triangle matches oracle") {
  SpectralGraph tri = detail::graph_from_edges(3, {{0, 1}, {0, 2}, {1, 2}}, {0, 0, 0});
  Rng rng(28);
  const Tensor64 h = random_features(3, 4, rng);
  GraphD rec;
  const Tensor64& zero =
      rec.value(message_passing(rec, tri, rec.leaf(h), rec.leaf(Tensor64({4, 4}))));
  for (int64_t i = 0; i < zero.size(); ++i) CHECK(zero[i] == 0.0);

  const Tensor64 theta = random_features(4, 4, rng);
  const Tensor64& got =
      rec.value(message_passing(rec, tri, rec.leaf(h), rec.leaf(theta)));
  CHECK(got.max_abs_diff(oracle::message_passing(tri, h, theta)) < 1e-12);
}

TEST_CASE("message passing matches the double-loop oracle on random graphs") {
  Rng rng(29);
  for (int trial = 0; trial < 100; ++trial) {
    const int64_t n = 4 + static_cast<int64_t>(rng.below(8));
    const Tensor64 f = random_features(n, 3, rng);
    const SpectralGraph g = knn_graph(f, 2);
    const Tensor64 theta = random_features(3, 3, rng);
    GraphD rec;
    const Tensor64& got = rec.value(message_passing(rec, g, rec.leaf(f), rec.leaf(theta)));
    CHECK(got.max_abs_diff(oracle::message_passing(g, f, theta)) < 1e-6);
  }
}

TEST_CASE("gcn -> pool -> gcn composite is differentiable at 1e-4") {
  Rng rng(30);
  const Tensor64 base = random_features(8, 4, rng, 0.2, 1.8);
  const double err = grad_check(
      [](GraphD& g, const std::vector<NodeId>& ids) {
        const SpectralGraph graph = knn_graph(g.value(ids[0]), 3);
        const NodeId h0 = gcn_layer(g, graph, ids[0], ids[1], Activation::relu);
        const LevelRecord level = topk_pool(g, graph, h0, ids[2], 4);
        const NodeId h1 =
            gcn_layer(g, level.pooled_graph, level.pooled, ids[3], Activation::relu);
        return g.sum_all(h1);
      },
      {base, random_features(4, 4, rng), Tensor64({4}, {0.3, -0.2, 0.5, 0.1}),
       random_features(4, 4, rng)});
  CHECK(err < 1e-4);
}

TEST_CASE("edge dump format: one 'i j cosine' line per edge") {
  SpectralGraph g = detail::graph_from_edges(3, {{0, 1}, {1, 2}}, {0.25, -0.5});
  std::ostringstream out;
  dump_edges(g, out);
  CHECK(out.str() == "0 1 0.25\n1 2 -0.5\n");
}

}  // TEST_SUITE
