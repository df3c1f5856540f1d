#include "sgr/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace sgr {

MetricsReport metrics_from_confusion(const std::vector<int64_t>& confusion,
                                     int64_t classes) {
  if (classes < 1 ||
      static_cast<int64_t>(confusion.size()) != classes * classes)
    throw ParameterError("metrics_from_confusion: expected a " + std::to_string(classes) +
                         "x" + std::to_string(classes) + " matrix");
  MetricsReport report;
  report.classes = classes;
  report.confusion = confusion;

  int64_t total = 0, diagonal = 0;
  std::vector<int64_t> row_sum(static_cast<size_t>(classes), 0);
  std::vector<int64_t> col_sum(static_cast<size_t>(classes), 0);
  for (int64_t t = 0; t < classes; ++t)
    for (int64_t p = 0; p < classes; ++p) {
      const int64_t v = confusion[static_cast<size_t>(t * classes + p)];
      if (v < 0) throw ParameterError("metrics_from_confusion: negative count");
      total += v;
      row_sum[static_cast<size_t>(t)] += v;
      col_sum[static_cast<size_t>(p)] += v;
      if (t == p) diagonal += v;
    }
  if (total == 0) throw ParameterError("metrics_from_confusion: empty matrix");

  report.per_class.assign(static_cast<size_t>(classes),
                          std::numeric_limits<double>::quiet_NaN());
  double aa_sum = 0.0;
  int64_t aa_classes = 0;
  for (int64_t t = 0; t < classes; ++t) {
    if (row_sum[static_cast<size_t>(t)] == 0) {
      report.warnings.push_back("class " + std::to_string(t + 1) +
                                " absent from truth; excluded from AA");
      continue;
    }
    const double acc = 100.0 * static_cast<double>(report.at(t, t)) /
                       static_cast<double>(row_sum[static_cast<size_t>(t)]);
    report.per_class[static_cast<size_t>(t)] = acc;
    aa_sum += acc;
    ++aa_classes;
  }
  report.oa = 100.0 * static_cast<double>(diagonal) / static_cast<double>(total);
  report.aa = aa_classes > 0 ? aa_sum / static_cast<double>(aa_classes) : 0.0;

  const double p_o = static_cast<double>(diagonal) / static_cast<double>(total);
  double p_e = 0.0;
  for (int64_t c = 0; c < classes; ++c)
    p_e += static_cast<double>(row_sum[static_cast<size_t>(c)]) *
           static_cast<double>(col_sum[static_cast<size_t>(c)]);
  p_e /= static_cast<double>(total) * static_cast<double>(total);
  // p_e == 1 only when one class holds all truth and all predictions.
  report.kappa = p_e < 1.0 ? 100.0 * (p_o - p_e) / (1.0 - p_e) : (p_o == 1.0 ? 100.0 : 0.0);
  return report;
}

MetricsReport average_reports(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw ParameterError("average_reports: no reports");
  const int64_t classes = reports.front().classes;
  MetricsReport mean;
  mean.classes = classes;
  mean.confusion.assign(static_cast<size_t>(classes * classes), 0);
  mean.per_class.assign(static_cast<size_t>(classes), 0.0);
  std::vector<int64_t> counted(static_cast<size_t>(classes), 0);
  for (const auto& r : reports) {
    if (r.classes != classes)
      throw ParameterError("average_reports: class counts differ across runs");
    for (size_t i = 0; i < r.confusion.size(); ++i) mean.confusion[i] += r.confusion[i];
    for (int64_t c = 0; c < classes; ++c)
      if (!std::isnan(r.per_class[static_cast<size_t>(c)])) {
        mean.per_class[static_cast<size_t>(c)] += r.per_class[static_cast<size_t>(c)];
        ++counted[static_cast<size_t>(c)];
      }
    mean.oa += r.oa;
    mean.aa += r.aa;
    mean.kappa += r.kappa;
  }
  const double n = static_cast<double>(reports.size());
  for (int64_t c = 0; c < classes; ++c) {
    if (counted[static_cast<size_t>(c)] > 0)
      mean.per_class[static_cast<size_t>(c)] /=
          static_cast<double>(counted[static_cast<size_t>(c)]);
    else
      mean.per_class[static_cast<size_t>(c)] = std::numeric_limits<double>::quiet_NaN();
  }
  mean.oa /= n;
  mean.aa /= n;
  mean.kappa /= n;
  mean.run_index = -1;
  return mean;
}

std::string format_report(const MetricsReport& report) {
  std::ostringstream out;
  char buf[64];
  out << "class  accuracy\n";
  for (int64_t c = 0; c < report.classes; ++c) {
    const double acc = report.per_class[static_cast<size_t>(c)];
    if (std::isnan(acc)) {
      std::snprintf(buf, sizeof(buf), "%-6lld n/a\n", static_cast<long long>(c + 1));
    } else {
      std::snprintf(buf, sizeof(buf), "%-6lld %.2f\n", static_cast<long long>(c + 1), acc);
    }
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "OA     %.2f\n", report.oa);
  out << buf;
  std::snprintf(buf, sizeof(buf), "AA     %.2f\n", report.aa);
  out << buf;
  std::snprintf(buf, sizeof(buf), "Kappa  %.2f\n", report.kappa);
  out << buf;
  out << "---\n";
  std::snprintf(buf, sizeof(buf), "oa: %.9g\n", report.oa);
  out << buf;
  std::snprintf(buf, sizeof(buf), "aa: %.9g\n", report.aa);
  out << buf;
  std::snprintf(buf, sizeof(buf), "kappa: %.9g\n", report.kappa);
  out << buf;
  for (const auto& w : report.warnings) out << "warning: " << w << "\n";
  return out.str();
}

std::vector<std::array<uint8_t, 3>> class_palette(int64_t classes) {
  // Fixed assignments, chosen to stay distinguishable on the usual 9- and
  // 16-class scenes; extended deterministically past the base table.
  static const std::array<std::array<uint8_t, 3>, 16> base{{{216, 82, 74},
                                                            {100, 180, 100},
                                                            {70, 120, 200},
                                                            {230, 200, 80},
                                                            {170, 100, 190},
                                                            {90, 200, 200},
                                                            {230, 140, 60},
                                                            {150, 150, 150},
                                                            {120, 80, 50},
                                                            {200, 120, 160},
                                                            {60, 160, 60},
                                                            {40, 70, 130},
                                                            {240, 240, 160},
                                                            {130, 220, 130},
                                                            {90, 60, 120},
                                                            {220, 220, 220}}};
  std::vector<std::array<uint8_t, 3>> palette;
  palette.reserve(static_cast<size_t>(classes));
  for (int64_t c = 0; c < classes; ++c) {
    if (c < static_cast<int64_t>(base.size())) {
      palette.push_back(base[static_cast<size_t>(c)]);
    } else {
      const uint64_t h = static_cast<uint64_t>(c + 1) * 0x9e3779b97f4a7c15ull;
      palette.push_back({static_cast<uint8_t>(64 + (h & 0x7f)),
                         static_cast<uint8_t>(64 + ((h >> 8) & 0x7f)),
                         static_cast<uint8_t>(64 + ((h >> 16) & 0x7f))});
    }
  }
  return palette;
}

void render_map(const std::vector<uint16_t>& ids, int64_t height, int64_t width,
                const std::vector<std::array<uint8_t, 3>>& palette, std::ostream& out) {
  if (static_cast<int64_t>(ids.size()) != height * width)
    throw ParameterError("render_map: id count does not match extents");
  uint16_t max_id = 0;
  for (const uint16_t id : ids) max_id = std::max(max_id, id);
  if (max_id > 0 && static_cast<int64_t>(palette.size()) < max_id)
    throw ParameterError("render_map: palette has " + std::to_string(palette.size()) +
                         " colors but class ids reach " + std::to_string(max_id));
  out << "P6\n" << width << " " << height << "\n255\n";
  for (const uint16_t id : ids) {
    std::array<uint8_t, 3> rgb{0, 0, 0};
    if (id > 0) rgb = palette[static_cast<size_t>(id - 1)];
    out.write(reinterpret_cast<const char*>(rgb.data()), 3);
  }
}

void render_map_file(const std::vector<uint16_t>& ids, int64_t height, int64_t width,
                     const std::vector<std::array<uint8_t, 3>>& palette,
                     const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IngestionError("cannot write " + path);
  render_map(ids, height, width, palette, out);
  if (!out) throw IngestionError("short write to " + path);
}

}  // namespace sgr
