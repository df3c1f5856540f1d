#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "sgr/model.hpp"
#include "sgr/train.hpp"

namespace sgr {

/// Fully resolved run configuration. Paper-protocol values are the defaults,
/// so a minimal config file only names the dataset paths. Unknown keys are
/// rejected at parse time; bounds are checked before any model memory is
/// allocated.
struct RunConfig {
  // dataset
  std::string cube_header;
  std::string cube_data;
  std::string labels_header;
  std::string labels_data;

  // architecture
  ModelKind model = ModelKind::sgr;
  int64_t features = 8;
  int64_t knn_k = 10;
  int64_t dense_cap = 4096;
  int64_t levels = 2;
  double pool_ratio = 0.5;
  int64_t gcn_layers_per_level = 1;

  // optimization
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  int64_t batch = 30;
  int64_t epochs = 500;
  int64_t patience = 20;
  double min_delta = 1e-3;
  int64_t max_decays = 2;

  // sampling
  std::vector<int64_t> per_class{50};  // single value broadcasts to all classes
  int64_t patch = 7;
  double val_fraction = 0.9;

  // run management
  int64_t runs = 5;
  uint64_t seed = 1;
  int64_t threads = 1;
  std::string output = "runs/out";

  /// Bounds checks that need no dataset knowledge.
  void validate() const;

  /// Per-class training counts resolved against the actual class count.
  std::vector<int64_t> resolved_per_class(int64_t classes) const;

  ModelConfig to_model_config(int64_t bands, int64_t classes) const;
  TrainOptions to_train_options() const;
};

/// Parses the nested key:value grammar (see README). `source_name` labels
/// error messages. A `provenance` section is accepted and ignored so emitted
/// manifests load as configs.
RunConfig parse_config(std::istream& in, const std::string& source_name);
RunConfig parse_config_file(const std::string& path);
RunConfig parse_config_string(const std::string& text);

/// Canonical nested rendering; parse(serialize(c)) == c.
std::string serialize_config(const RunConfig& config);

}  // namespace sgr
