#pragma once

#include <array>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "sgr/data.hpp"

namespace sgr {

/// Evaluation summary on the paper-style percent scale: per-class accuracy,
/// overall accuracy, average accuracy, and Cohen's kappa (x100).
struct MetricsReport {
  int64_t classes = 0;
  std::vector<int64_t> confusion;  // K x K, rows = truth, cols = prediction
  std::vector<double> per_class;   // percent; NaN for classes absent from truth
  double oa = 0.0;
  double aa = 0.0;
  double kappa = 0.0;
  int64_t run_index = 0;
  std::vector<std::string> warnings;

  int64_t at(int64_t truth, int64_t pred) const {
    return confusion[static_cast<size_t>(truth * classes + pred)];
  }
};

/// Derives all metrics from a K x K confusion matrix. Classes with empty
/// truth rows are excluded from AA and flagged with a warning.
MetricsReport metrics_from_confusion(const std::vector<int64_t>& confusion, int64_t classes);

/// Arithmetic mean of per-run reports (same class count required).
MetricsReport average_reports(const std::vector<MetricsReport>& reports);

/// Text table in the paper's row order (per-class, then OA/AA/Kappa)
/// followed by a machine-readable key:value block.
std::string format_report(const MetricsReport& report);

/// One fixed RGB per class id; index 0 (unlabeled) is black.
std::vector<std::array<uint8_t, 3>> class_palette(int64_t classes);

/// Binary P6 image, one palette color per class id, black for unlabeled.
void render_map(const std::vector<uint16_t>& ids, int64_t height, int64_t width,
                const std::vector<std::array<uint8_t, 3>>& palette, std::ostream& out);
void render_map_file(const std::vector<uint16_t>& ids, int64_t height, int64_t width,
                     const std::vector<std::array<uint8_t, 3>>& palette,
                     const std::string& path);

}  // namespace sgr
