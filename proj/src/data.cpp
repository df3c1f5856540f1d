#include "sgr/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "sgr/rng.hpp"

namespace sgr {

namespace {

void put_f32_le(std::vector<unsigned char>& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  out.push_back(static_cast<unsigned char>(bits & 0xff));
  out.push_back(static_cast<unsigned char>((bits >> 8) & 0xff));
  out.push_back(static_cast<unsigned char>((bits >> 16) & 0xff));
  out.push_back(static_cast<unsigned char>((bits >> 24) & 0xff));
}

float get_f32_le(const unsigned char* p) {
  const uint32_t bits = static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
                        (static_cast<uint32_t>(p[2]) << 16) |
                        (static_cast<uint32_t>(p[3]) << 24);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return bytes;
}

void write_file(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IngestionError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IngestionError("short write to " + path);
}

std::string trim(const std::string& s) {
  const size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::map<std::string, std::string> parse_header(const std::string& path,
                                                const char* expected_magic) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open header " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const size_t colon = t.find(':');
    if (colon == std::string::npos)
      throw IngestionError(path + ":" + std::to_string(line_no) +
                           ": expected 'key: value'");
    kv[trim(t.substr(0, colon))] = trim(t.substr(colon + 1));
  }
  const auto magic = kv.find("magic");
  if (magic == kv.end() || magic->second != expected_magic)
    throw IngestionError(path + ": magic mismatch, expected " +
                         std::string(expected_magic) + ", got '" +
                         (magic == kv.end() ? "" : magic->second) + "'");
  return kv;
}

int64_t header_int(const std::map<std::string, std::string>& kv, const std::string& key,
                   const std::string& path) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw IngestionError(path + ": missing header field '" + key + "'");
  try {
    size_t used = 0;
    const int64_t v = std::stoll(it->second, &used);
    if (used != it->second.size() || v <= 0) throw std::invalid_argument("range");
    return v;
  } catch (const std::exception&) {
    throw IngestionError(path + ": field '" + key + "' must be a positive integer, got '" +
                         it->second + "'");
  }
}

void require_field(const std::map<std::string, std::string>& kv, const std::string& key,
                   const std::string& want, const std::string& path) {
  const auto it = kv.find(key);
  if (it == kv.end() || it->second != want)
    throw IngestionError(path + ": field '" + key + "' must be '" + want + "', got '" +
                         (it == kv.end() ? "" : it->second) + "'");
}

}  // namespace

void HsiCube::refresh_band_ranges() {
  band_min.assign(static_cast<size_t>(bands), std::numeric_limits<float>::max());
  band_max.assign(static_cast<size_t>(bands), std::numeric_limits<float>::lowest());
  for (int64_t b = 0; b < bands; ++b)
    for (int64_t i = 0; i < height * width; ++i) {
      const float v = values[static_cast<size_t>(b * height * width + i)];
      band_min[static_cast<size_t>(b)] = std::min(band_min[static_cast<size_t>(b)], v);
      band_max[static_cast<size_t>(b)] = std::max(band_max[static_cast<size_t>(b)], v);
    }
}

int64_t mirror_index(int64_t i, int64_t n) {
  if (n == 1) return 0;
  const int64_t period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

Tensor SampleSet::patch(int64_t i) const {
  const Entry& e = entries_[static_cast<size_t>(i)];
  const HsiCube& c = *cube_;
  const int64_t half = patch_ / 2;
  Tensor out({1, c.bands, patch_, patch_});
  int64_t clamped = 0;
  for (int64_t b = 0; b < c.bands; ++b) {
    const float lo = norm_.lo[static_cast<size_t>(b)];
    const float hi = norm_.hi[static_cast<size_t>(b)];
    const float span = hi - lo;
    for (int64_t dy = -half; dy <= half; ++dy) {
      const int64_t ys = mirror_index(e.y + dy, c.height);
      for (int64_t dx = -half; dx <= half; ++dx) {
        const int64_t xs = mirror_index(e.x + dx, c.width);
        float v = span > 0.0f ? (c.at(b, ys, xs) - lo) / span : 0.0f;
        if (v < 0.0f) {
          v = 0.0f;
          ++clamped;
        } else if (v > 1.0f) {
          v = 1.0f;
          ++clamped;
        }
        out.at(0, b, dy + half, dx + half) = v;
      }
    }
  }
  if (clamped > 0) clamped_->fetch_add(clamped);
  return out;
}

HsiCube load_cube(const std::string& data_path, const std::string& header_path) {
  const auto kv = parse_header(header_path, "SGRC");
  require_field(kv, "version", "1", header_path);
  require_field(kv, "dtype", "f32", header_path);
  require_field(kv, "layout", "bsq", header_path);
  require_field(kv, "byteorder", "little", header_path);
  HsiCube cube;
  cube.bands = header_int(kv, "bands", header_path);
  cube.height = header_int(kv, "height", header_path);
  cube.width = header_int(kv, "width", header_path);
  for (const auto& [key, value] : kv)
    if (key != "magic" && key != "version" && key != "dtype" && key != "layout" &&
        key != "byteorder" && key != "bands" && key != "height" && key != "width")
      throw IngestionError(header_path + ": unknown header field '" + key + "'");

  const auto bytes = read_file(data_path);
  const int64_t expected = cube.bands * cube.height * cube.width * 4;
  if (static_cast<int64_t>(bytes.size()) != expected)
    throw IngestionError(data_path + ": size mismatch, expected " +
                         std::to_string(expected) + " bytes, got " +
                         std::to_string(bytes.size()));
  cube.values.resize(static_cast<size_t>(expected / 4));
  for (size_t i = 0; i < cube.values.size(); ++i) {
    cube.values[i] = get_f32_le(bytes.data() + i * 4);
    if (!std::isfinite(cube.values[i]))
      throw IngestionError(data_path + ": non-finite value at byte offset " +
                           std::to_string(i * 4));
  }
  cube.refresh_band_ranges();
  return cube;
}

void write_cube(const HsiCube& cube, const std::string& data_path,
                const std::string& header_path) {
  std::ostringstream hdr;
  hdr << "magic: SGRC\n"
      << "version: 1\n"
      << "bands: " << cube.bands << "\n"
      << "height: " << cube.height << "\n"
      << "width: " << cube.width << "\n"
      << "dtype: f32\n"
      << "layout: bsq\n"
      << "byteorder: little\n";
  std::ofstream hout(header_path, std::ios::trunc);
  if (!hout) throw IngestionError("cannot write " + header_path);
  hout << hdr.str();
  std::vector<unsigned char> bytes;
  bytes.reserve(cube.values.size() * 4);
  for (const float v : cube.values) put_f32_le(bytes, v);
  write_file(data_path, bytes);
}

LabelMap load_labels(const std::string& data_path, const std::string& header_path) {
  const auto kv = parse_header(header_path, "SGRL");
  require_field(kv, "version", "1", header_path);
  require_field(kv, "dtype", "u16", header_path);
  require_field(kv, "layout", "row", header_path);
  require_field(kv, "byteorder", "little", header_path);
  LabelMap labels;
  labels.height = header_int(kv, "height", header_path);
  labels.width = header_int(kv, "width", header_path);
  labels.classes = header_int(kv, "classes", header_path);
  for (const auto& [key, value] : kv)
    if (key != "magic" && key != "version" && key != "dtype" && key != "layout" &&
        key != "byteorder" && key != "height" && key != "width" && key != "classes")
      throw IngestionError(header_path + ": unknown header field '" + key + "'");

  const auto bytes = read_file(data_path);
  const int64_t expected = labels.height * labels.width * 2;
  if (static_cast<int64_t>(bytes.size()) != expected)
    throw IngestionError(data_path + ": size mismatch, expected " +
                         std::to_string(expected) + " bytes, got " +
                         std::to_string(bytes.size()));
  labels.ids.resize(static_cast<size_t>(expected / 2));
  for (size_t i = 0; i < labels.ids.size(); ++i) {
    labels.ids[i] = static_cast<uint16_t>(bytes[i * 2] | (bytes[i * 2 + 1] << 8));
    if (labels.ids[i] > labels.classes)
      throw IngestionError(data_path + ": class id " + std::to_string(labels.ids[i]) +
                           " exceeds declared class count " +
                           std::to_string(labels.classes) + " at byte offset " +
                           std::to_string(i * 2));
  }
  return labels;
}

void write_labels(const LabelMap& labels, const std::string& data_path,
                  const std::string& header_path) {
  std::ofstream hout(header_path, std::ios::trunc);
  if (!hout) throw IngestionError("cannot write " + header_path);
  hout << "magic: SGRL\n"
       << "version: 1\n"
       << "height: " << labels.height << "\n"
       << "width: " << labels.width << "\n"
       << "classes: " << labels.classes << "\n"
       << "dtype: u16\n"
       << "layout: row\n"
       << "byteorder: little\n";
  std::vector<unsigned char> bytes;
  bytes.reserve(labels.ids.size() * 2);
  for (const uint16_t v : labels.ids) {
    bytes.push_back(static_cast<unsigned char>(v & 0xff));
    bytes.push_back(static_cast<unsigned char>(v >> 8));
  }
  write_file(data_path, bytes);
}

std::pair<SampleSet, SampleSet> extract_samples(std::shared_ptr<const HsiCube> cube,
                                                const LabelMap& labels,
                                                const std::vector<int64_t>& per_class_counts,
                                                uint64_t seed, int64_t patch) {
  if (cube->height != labels.height || cube->width != labels.width)
    throw ParameterError("extract_samples: cube and label map extents differ");
  if (static_cast<int64_t>(per_class_counts.size()) != labels.classes)
    throw ParameterError("extract_samples: need one training count per class (" +
                         std::to_string(labels.classes) + "), got " +
                         std::to_string(per_class_counts.size()));
  if (patch < 1 || patch % 2 == 0)
    throw ParameterError("extract_samples: patch must be odd and positive");

  // Labeled coordinates per class, in row-major scan order.
  std::vector<std::vector<SampleSet::Entry>> pixels(static_cast<size_t>(labels.classes));
  for (int64_t y = 0; y < labels.height; ++y)
    for (int64_t x = 0; x < labels.width; ++x) {
      const uint16_t cls = labels.at(y, x);
      if (cls == 0) continue;
      pixels[static_cast<size_t>(cls - 1)].push_back({y, x, cls});
    }

  Rng rng(seed);
  std::vector<SampleSet::Entry> train_entries;
  std::vector<SampleSet::Entry> test_entries;
  for (int64_t cls = 0; cls < labels.classes; ++cls) {
    auto& pool = pixels[static_cast<size_t>(cls)];
    const int64_t want = per_class_counts[static_cast<size_t>(cls)];
    if (want < 1 || want > static_cast<int64_t>(pool.size()))
      throw ParameterError("extract_samples: class " + std::to_string(cls + 1) + " has " +
                           std::to_string(pool.size()) + " labeled pixels, cannot draw " +
                           std::to_string(want));
    const auto picks =
        rng.sample_without_replacement(static_cast<int64_t>(pool.size()), want);
    std::vector<bool> taken(pool.size(), false);
    for (const int64_t p : picks) {
      taken[static_cast<size_t>(p)] = true;
      train_entries.push_back(pool[static_cast<size_t>(p)]);
    }
    for (size_t p = 0; p < pool.size(); ++p)
      if (!taken[p]) test_entries.push_back(pool[p]);
  }

  // Per-band range over every pixel appearing in a training patch window.
  NormStats norm;
  norm.lo.assign(static_cast<size_t>(cube->bands), std::numeric_limits<float>::max());
  norm.hi.assign(static_cast<size_t>(cube->bands), std::numeric_limits<float>::lowest());
  const int64_t half = patch / 2;
  for (const auto& e : train_entries)
    for (int64_t dy = -half; dy <= half; ++dy) {
      const int64_t ys = mirror_index(e.y + dy, cube->height);
      for (int64_t dx = -half; dx <= half; ++dx) {
        const int64_t xs = mirror_index(e.x + dx, cube->width);
        for (int64_t b = 0; b < cube->bands; ++b) {
          const float v = cube->at(b, ys, xs);
          norm.lo[static_cast<size_t>(b)] = std::min(norm.lo[static_cast<size_t>(b)], v);
          norm.hi[static_cast<size_t>(b)] = std::max(norm.hi[static_cast<size_t>(b)], v);
        }
      }
    }

  SampleSet train(cube, norm, patch, SampleRole::train, std::move(train_entries));
  SampleSet test(std::move(cube), std::move(norm), patch, SampleRole::test,
                 std::move(test_entries));
  return {std::move(train), std::move(test)};
}

std::pair<SampleSet, SampleSet> split_train_val(const SampleSet& train, double fraction,
                                                uint64_t seed) {
  if (fraction <= 0.0 || fraction >= 1.0)
    throw ParameterError("split_train_val: fraction must be in (0, 1); the scheduler "
                         "requires a non-empty validation set");
  std::map<int64_t, std::vector<int64_t>> by_class;
  for (int64_t i = 0; i < train.size(); ++i) by_class[train.label(i)].push_back(i);

  Rng rng(seed);
  std::vector<SampleSet::Entry> fit_entries;
  std::vector<SampleSet::Entry> val_entries;
  for (auto& [cls, indices] : by_class) {
    if (indices.size() < 2)
      throw ParameterError("split_train_val: class " + std::to_string(cls) +
                           " has fewer than 2 samples");
    rng.shuffle(indices);
    int64_t n_fit = static_cast<int64_t>(
        std::floor(fraction * static_cast<double>(indices.size())));
    n_fit = std::clamp<int64_t>(n_fit, 1, static_cast<int64_t>(indices.size()) - 1);
    for (size_t t = 0; t < indices.size(); ++t) {
      const auto& e = train.entry(indices[t]);
      if (static_cast<int64_t>(t) < n_fit)
        fit_entries.push_back(e);
      else
        val_entries.push_back(e);
    }
  }
  return {train.with_entries(std::move(fit_entries), SampleRole::fit),
          train.with_entries(std::move(val_entries), SampleRole::val)};
}

double synth_signature(const SynthSpec& spec, int64_t cls, int64_t band) {
  const double center = static_cast<double>(spec.bands) *
                        (2.0 * static_cast<double>(cls) - 1.0) /
                        (2.0 * static_cast<double>(spec.classes));
  const double bump_width =
      std::max(1.0, static_cast<double>(spec.bands) / (3.0 * static_cast<double>(spec.classes)));
  const double d = (static_cast<double>(band) - center) / bump_width;
  return 0.05 + std::exp(-0.5 * d * d);
}

std::pair<HsiCube, LabelMap> synth_cube(const SynthSpec& spec) {
  if (spec.classes < 2 || spec.classes > 16)
    throw ParameterError("synth_cube: classes must be in [2, 16]");
  if (spec.bands < 1 || spec.height < 1 || spec.width < 1 || spec.noise < 0.0)
    throw ParameterError("synth_cube: degenerate spec");

  Rng rng(spec.seed);

  // Seeded Voronoi sites; every class owns at least one site.
  struct Site {
    int64_t y, x, cls;
  };
  const int64_t n_sites = 3 * spec.classes;
  std::vector<Site> sites;
  sites.reserve(static_cast<size_t>(n_sites));
  for (int64_t i = 0; i < n_sites; ++i)
    sites.push_back({static_cast<int64_t>(rng.below(static_cast<uint64_t>(spec.height))),
                     static_cast<int64_t>(rng.below(static_cast<uint64_t>(spec.width))),
                     1 + i % spec.classes});

  LabelMap labels;
  labels.height = spec.height;
  labels.width = spec.width;
  labels.classes = spec.classes;
  labels.ids.resize(static_cast<size_t>(spec.height * spec.width));
  for (int64_t y = 0; y < spec.height; ++y)
    for (int64_t x = 0; x < spec.width; ++x) {
      int64_t best = 0;
      int64_t best_d = std::numeric_limits<int64_t>::max();
      for (size_t s = 0; s < sites.size(); ++s) {
        const int64_t dy = y - sites[s].y;
        const int64_t dx = x - sites[s].x;
        const int64_t d = dy * dy + dx * dx;
        if (d < best_d) {
          best_d = d;
          best = static_cast<int64_t>(s);
        }
      }
      labels.at(y, x) = static_cast<uint16_t>(sites[static_cast<size_t>(best)].cls);
    }

  HsiCube cube;
  cube.bands = spec.bands;
  cube.height = spec.height;
  cube.width = spec.width;
  cube.values.resize(static_cast<size_t>(spec.bands * spec.height * spec.width));
  for (int64_t b = 0; b < spec.bands; ++b) {
    std::vector<double> sig(static_cast<size_t>(spec.classes));
    for (int64_t c = 1; c <= spec.classes; ++c)
      sig[static_cast<size_t>(c - 1)] = synth_signature(spec, c, b);
    for (int64_t y = 0; y < spec.height; ++y)
      for (int64_t x = 0; x < spec.width; ++x) {
        const double base = sig[static_cast<size_t>(labels.at(y, x) - 1)];
        const double v = spec.noise > 0.0 ? base + spec.noise * rng.normal() : base;
        cube.at(b, y, x) = static_cast<float>(v);
      }
  }
  cube.refresh_band_ranges();
  return {std::move(cube), std::move(labels)};
}

}  // namespace sgr
