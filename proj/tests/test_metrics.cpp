#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sgr/data.hpp"
#include "sgr/metrics.hpp"
#include "sgr/rng.hpp"

using namespace sgr;

TEST_SUITE("train-metrics") {

TEST_CASE("perfect predictions give 100/100/100") {
  const MetricsReport r = metrics_from_confusion({30, 0, 0, 0, 20, 0, 0, 0, 50}, 3);
  CHECK(r.oa == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(r.aa == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(r.kappa == doctest::Approx(100.0).epsilon(1e-12));
}

TEST_CASE("hand-computed confusion [[45,5],[10,40]] -> OA 85, AA 85, Kappa 70") {
  const MetricsReport r = metrics_from_confusion({45, 5, 10, 40}, 2);
  CHECK(std::abs(r.oa - 85.0) < 1e-12);
  CHECK(std::abs(r.aa - 85.0) < 1e-12);
  CHECK(std::abs(r.kappa - 70.0) < 1e-12);
  CHECK(r.per_class[0] == doctest::Approx(90.0).epsilon(1e-12));
  CHECK(r.per_class[1] == doctest::Approx(80.0).epsilon(1e-12));
}

TEST_CASE("kappa is 0 when rows are proportional to column marginals") {
  // Prediction independent of truth: p_o == p_e.
  const MetricsReport r = metrics_from_confusion({30, 10, 60, 20}, 2);
  CHECK(std::abs(r.kappa) < 1e-12);

  const MetricsReport r2 = metrics_from_confusion({8, 8, 4, 6, 6, 3, 2, 2, 1}, 3);
  CHECK(std::abs(r2.kappa) < 1e-12);
}

TEST_CASE("kappa is 100 iff the matrix is diagonal (given both marginals)") {
  const MetricsReport diag = metrics_from_confusion({7, 0, 0, 13}, 2);
  CHECK(diag.kappa == doctest::Approx(100.0).epsilon(1e-12));
  const MetricsReport off = metrics_from_confusion({7, 1, 0, 13}, 2);
  CHECK(off.kappa < 100.0);
}

TEST_CASE("OA is invariant under simultaneous row/column permutation") {
  Rng rng(90);
  std::vector<int64_t> m(16);
  for (auto& v : m) v = static_cast<int64_t>(rng.below(20));
  m[0] += 5;
  const MetricsReport base = metrics_from_confusion(m, 4);
  std::vector<int64_t> perm{2, 0, 3, 1};
  std::vector<int64_t> permuted(16);
  for (int64_t i = 0; i < 4; ++i)
    for (int64_t j = 0; j < 4; ++j)
      permuted[static_cast<size_t>(perm[static_cast<size_t>(i)] * 4 +
                                   perm[static_cast<size_t>(j)])] =
          m[static_cast<size_t>(i * 4 + j)];
  const MetricsReport shuffled = metrics_from_confusion(permuted, 4);
  CHECK(base.oa == doctest::Approx(shuffled.oa).epsilon(1e-12));
  CHECK(base.kappa == doctest::Approx(shuffled.kappa).epsilon(1e-12));
}

TEST_CASE("classes absent from truth are excluded from AA with a warning") {
  const MetricsReport r = metrics_from_confusion({10, 0, 0, 0, 0, 0, 5, 0, 15}, 3);
  CHECK(std::isnan(r.per_class[1]));
  CHECK(r.aa == doctest::Approx(0.5 * (100.0 + 75.0)).epsilon(1e-12));
  REQUIRE(r.warnings.size() == 1);
  CHECK(r.warnings[0].find("class 2") != std::string::npos);
}

TEST_CASE("report layout: per-class rows then OA/AA/Kappa plus key:value block") {
  const MetricsReport r = metrics_from_confusion({45, 5, 10, 40}, 2);
  const std::string text = format_report(r);
  const size_t c1 = text.find("1      90.00");
  const size_t c2 = text.find("2      80.00");
  const size_t oa = text.find("OA     85.00");
  const size_t aa = text.find("AA     85.00");
  const size_t kappa = text.find("Kappa  70.00");
  const size_t machine = text.find("kappa: 70");
  CHECK(c1 != std::string::npos);
  CHECK(c2 != std::string::npos);
  CHECK(c1 < c2);
  CHECK(c2 < oa);
  CHECK(oa < aa);
  CHECK(aa < kappa);
  CHECK(machine != std::string::npos);
}

TEST_CASE("averaging reports matches the five-session protocol shape") {
  MetricsReport a = metrics_from_confusion({45, 5, 10, 40}, 2);
  MetricsReport b = metrics_from_confusion({50, 0, 0, 50}, 2);
  const MetricsReport mean = average_reports({a, b});
  CHECK(mean.oa == doctest::Approx(0.5 * (85.0 + 100.0)).epsilon(1e-12));
  CHECK(mean.kappa == doctest::Approx(0.5 * (70.0 + 100.0)).epsilon(1e-12));
}

TEST_CASE("render_map: 1x1 class-1 file is an 11-byte header plus 3 bytes") {
  std::ostringstream out(std::ios::binary);
  render_map({1}, 1, 1, class_palette(1), out);
  const std::string bytes = out.str();
  REQUIRE(bytes.size() == 14);
  CHECK(bytes.substr(0, 11) == "P6\n1 1\n255\n");
}

TEST_CASE("render_map: unlabeled pixels are black, palette must cover ids") {
  std::ostringstream out(std::ios::binary);
  render_map({0, 2}, 1, 2, class_palette(2), out);
  const std::string bytes = out.str();
  REQUIRE(bytes.size() == 11 + 6);
  CHECK(bytes[11] == 0);
  CHECK(bytes[12] == 0);
  CHECK(bytes[13] == 0);
  CHECK_THROWS_AS(render_map({3}, 1, 1, class_palette(2), out), ParameterError);
  CHECK_THROWS_AS(render_map({1, 1}, 1, 1, class_palette(2), out), ParameterError);
}

TEST_CASE("ground-truth rendering reproduces the generator regions byte for byte") {
  SynthSpec spec;
  spec.classes = 3;
  spec.bands = 2;
  spec.height = 10;
  spec.width = 10;
  spec.seed = 91;
  auto [cube, labels] = synth_cube(spec);
  std::ostringstream a(std::ios::binary), b(std::ios::binary);
  render_map(labels.ids, 10, 10, class_palette(3), a);
  render_map(labels.ids, 10, 10, class_palette(3), b);
  CHECK(a.str() == b.str());

  const auto palette = class_palette(3);
  const std::string bytes = a.str();
  const size_t header = bytes.find("255\n") + 4;
  for (int64_t i = 0; i < 100; ++i) {
    const auto& rgb = palette[static_cast<size_t>(labels.ids[static_cast<size_t>(i)] - 1)];
    CHECK(static_cast<uint8_t>(bytes[header + static_cast<size_t>(i) * 3]) == rgb[0]);
  }
}

}  // TEST_SUITE
