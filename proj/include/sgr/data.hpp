#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "sgr/tensor.hpp"

namespace sgr {

/// Radiance volume, band-sequential: all H x W values of band 0, then band 1,
/// and so on. Values are finite by construction (loaders validate).
struct HsiCube {
  int64_t bands = 0;
  int64_t height = 0;
  int64_t width = 0;
  std::vector<float> values;
  std::vector<float> band_min;  // whole-cube per-band range, for diagnostics
  std::vector<float> band_max;

  float at(int64_t band, int64_t y, int64_t x) const {
    return values[static_cast<size_t>((band * height + y) * width + x)];
  }
  float& at(int64_t band, int64_t y, int64_t x) {
    return values[static_cast<size_t>((band * height + y) * width + x)];
  }

  void refresh_band_ranges();
};

/// Per-pixel class ids, row-major; 0 means unlabeled.
struct LabelMap {
  int64_t height = 0;
  int64_t width = 0;
  int64_t classes = 0;
  std::vector<uint16_t> ids;

  uint16_t at(int64_t y, int64_t x) const {
    return ids[static_cast<size_t>(y * width + x)];
  }
  uint16_t& at(int64_t y, int64_t x) {
    return ids[static_cast<size_t>(y * width + x)];
  }
};

/// Per-band normalization range, computed from training patches only.
struct NormStats {
  std::vector<float> lo;
  std::vector<float> hi;
};

enum class SampleRole { train, fit, val, test };

/// Labeled pixel coordinates over a shared cube. Patches are materialized on
/// demand: mirror-padded spatial windows, normalized per band to [0, 1] with
/// train-set statistics; out-of-range test values are clamped and counted.
class SampleSet {
 public:
  struct Entry {
    int64_t y = 0;
    int64_t x = 0;
    int64_t label = 0;  // 1..K
  };

  SampleSet() = default;
  SampleSet(std::shared_ptr<const HsiCube> cube, NormStats norm, int64_t patch,
            SampleRole role, std::vector<Entry> entries)
      : cube_(std::move(cube)),
        norm_(std::move(norm)),
        patch_(patch),
        role_(role),
        entries_(std::move(entries)) {}

  SampleRole role() const { return role_; }
  int64_t size() const { return static_cast<int64_t>(entries_.size()); }
  const Entry& entry(int64_t i) const { return entries_[static_cast<size_t>(i)]; }
  int64_t label(int64_t i) const { return entries_[static_cast<size_t>(i)].label; }
  int64_t patch_extent() const { return patch_; }
  const NormStats& norm() const { return norm_; }
  const HsiCube& cube() const { return *cube_; }
  std::shared_ptr<const HsiCube> cube_ptr() const { return cube_; }

  /// 1 x B x patch x patch tensor for sample i.
  Tensor patch(int64_t i) const;

  /// Values clamped so far while materializing patches from this set.
  int64_t clamped_values() const { return clamped_->load(); }

  SampleSet with_entries(std::vector<Entry> entries, SampleRole role) const {
    return SampleSet(cube_, norm_, patch_, role, std::move(entries));
  }

 private:
  std::shared_ptr<const HsiCube> cube_;
  NormStats norm_;
  int64_t patch_ = 7;
  SampleRole role_ = SampleRole::train;
  std::vector<Entry> entries_;
  std::shared_ptr<std::atomic<int64_t>> clamped_ =
      std::make_shared<std::atomic<int64_t>>(0);
};

/// Edge-repeating mirror fold of index i into [0, n).
int64_t mirror_index(int64_t i, int64_t n);

// --- raw on-disk formats ---------------------------------------------------
// Header files are "key: value" text; data files are raw little-endian
// payloads (f32 band-sequential for cubes, u16 row-major for labels).

HsiCube load_cube(const std::string& data_path, const std::string& header_path);
void write_cube(const HsiCube& cube, const std::string& data_path,
                const std::string& header_path);

LabelMap load_labels(const std::string& data_path, const std::string& header_path);
void write_labels(const LabelMap& labels, const std::string& data_path,
                  const std::string& header_path);

// --- sampling protocol -----------------------------------------------------

/// Seeded per-class draw without replacement for training; every remaining
/// labeled pixel becomes test. Training entries are ordered by (class, draw
/// index), test entries by (class, scan order). Label 0 is never sampled.
std::pair<SampleSet, SampleSet> extract_samples(std::shared_ptr<const HsiCube> cube,
                                                const LabelMap& labels,
                                                const std::vector<int64_t>& per_class_counts,
                                                uint64_t seed, int64_t patch = 7);

/// Stratified split of a training set; `fraction` of each class goes to the
/// fit set, the rest to validation. Requires fraction in (0, 1) and at least
/// two samples per class.
std::pair<SampleSet, SampleSet> split_train_val(const SampleSet& train, double fraction,
                                                uint64_t seed);

// --- synthetic task --------------------------------------------------------

struct SynthSpec {
  int64_t classes = 4;
  int64_t bands = 48;
  int64_t height = 64;
  int64_t width = 64;
  double noise = 0.7;  // generator default, additive Gaussian sigma
  uint64_t seed = 7;
};

/// Analytic spectral signature of class `cls` (1-based) at band b: a
/// Gaussian bump over a small baseline, with per-class center bands spread
/// evenly across the spectrum.
double synth_signature(const SynthSpec& spec, int64_t cls, int64_t band);

/// Deterministic fully labeled cube: K bump signatures over seeded Voronoi
/// regions plus additive Gaussian noise.
std::pair<HsiCube, LabelMap> synth_cube(const SynthSpec& spec);

}  // namespace sgr
