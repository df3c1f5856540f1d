#include "sgr/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace sgr {

namespace {

std::string trim(const std::string& s) {
  const size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

struct Parser {
  std::istream& in;
  const std::string& source;
  int line_no = 0;

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParameterError(source + ":" + std::to_string(line_no) + ": " + msg);
  }

  int64_t to_int(const std::string& key, const std::string& value) const {
    int64_t v = 0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc{} || ptr != value.data() + value.size())
      fail("'" + key + "' expects an integer, got '" + value + "'");
    return v;
  }

  uint64_t to_uint(const std::string& key, const std::string& value) const {
    uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc{} || ptr != value.data() + value.size())
      fail("'" + key + "' expects a non-negative integer, got '" + value + "'");
    return v;
  }

  double to_real(const std::string& key, const std::string& value) const {
    try {
      size_t used = 0;
      const double v = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      fail("'" + key + "' expects a number, got '" + value + "'");
    }
  }

  std::vector<int64_t> to_int_list(const std::string& key, const std::string& value) const {
    std::vector<int64_t> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty()) fail("'" + key + "' has an empty list entry");
      out.push_back(to_int(key, item));
    }
    if (out.empty()) fail("'" + key + "' expects at least one integer");
    return out;
  }
};

}  // namespace

void RunConfig::validate() const {
  const auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ParameterError("config: " + msg);
  };
  require(features >= 4 && features % 4 == 0, "encoder.features must be a positive multiple of 4");
  require(knn_k >= 1, "graph.knn_k must be >= 1");
  require(dense_cap >= 1, "graph.dense_cap must be >= 1");
  require(levels >= 1, "pyramid.levels must be >= 1");
  require(pool_ratio > 0.0 && pool_ratio <= 1.0, "pyramid.pool_ratio must be in (0, 1]");
  require(gcn_layers_per_level >= 1, "pyramid.gcn_layers_per_level must be >= 1");
  require(lr > 0.0, "optimizer.lr must be positive");
  require(momentum >= 0.0 && momentum < 1.0, "optimizer.momentum must be in [0, 1)");
  require(weight_decay >= 0.0, "optimizer.weight_decay must be >= 0");
  require(batch >= 1, "optimizer.batch must be >= 1");
  require(epochs >= 1, "optimizer.epochs must be >= 1");
  require(patience >= 1, "optimizer.patience must be >= 1");
  require(min_delta >= 0.0, "optimizer.min_delta must be >= 0");
  require(max_decays >= 0, "optimizer.max_decays must be >= 0");
  require(!per_class.empty(), "sampling.per_class must name at least one count");
  for (const int64_t c : per_class)
    require(c >= 1, "sampling.per_class entries must be >= 1");
  require(patch >= 1 && patch % 2 == 1, "sampling.patch must be odd and positive");
  require(val_fraction > 0.0 && val_fraction < 1.0,
          "sampling.val_fraction must be in (0, 1); the plateau scheduler needs a "
          "validation set");
  require(runs >= 1, "runs must be >= 1");
  require(threads >= 1, "threads must be >= 1");
}

std::vector<int64_t> RunConfig::resolved_per_class(int64_t classes) const {
  if (static_cast<int64_t>(per_class.size()) == classes) return per_class;
  if (per_class.size() == 1)
    return std::vector<int64_t>(static_cast<size_t>(classes), per_class[0]);
  throw ParameterError("config: sampling.per_class has " +
                       std::to_string(per_class.size()) + " entries but the label map has " +
                       std::to_string(classes) + " classes");
}

ModelConfig RunConfig::to_model_config(int64_t bands, int64_t classes) const {
  ModelConfig cfg;
  cfg.bands = bands;
  cfg.patch = patch;
  cfg.features = features;
  cfg.knn_k = knn_k;
  cfg.levels = levels;
  cfg.pool_ratio = pool_ratio;
  cfg.gcn_layers_per_level = gcn_layers_per_level;
  cfg.classes = classes;
  cfg.dense_cap = dense_cap;
  cfg.kind = model;
  cfg.validate();
  return cfg;
}

TrainOptions RunConfig::to_train_options() const {
  TrainOptions opt;
  opt.lr = lr;
  opt.momentum = momentum;
  opt.weight_decay = weight_decay;
  opt.batch = batch;
  opt.epochs = epochs;
  opt.patience = patience;
  opt.min_delta = min_delta;
  opt.max_decays = max_decays;
  opt.threads = static_cast<int>(threads);
  return opt;
}

RunConfig parse_config(std::istream& in, const std::string& source_name) {
  RunConfig config;
  Parser p{in, source_name};
  std::string section;
  std::string line;
  while (std::getline(in, line)) {
    ++p.line_no;
    std::string t = trim(line);
    const size_t hash = t.find('#');
    if (hash != std::string::npos) t = trim(t.substr(0, hash));
    if (t.empty()) continue;

    if (t == "}") {
      if (section.empty()) p.fail("unmatched '}'");
      section.clear();
      continue;
    }
    if (t.size() > 1 && t.back() == '{') {
      if (!section.empty()) p.fail("sections cannot nest");
      section = trim(t.substr(0, t.size() - 1));
      if (section.empty()) p.fail("section needs a name");
      continue;
    }
    const size_t colon = t.find(':');
    if (colon == std::string::npos) p.fail("expected 'key: value', got '" + t + "'");
    const std::string key = trim(t.substr(0, colon));
    const std::string value = trim(t.substr(colon + 1));
    if (key.empty() || value.empty()) p.fail("expected 'key: value', got '" + t + "'");

    if (section == "provenance") continue;  // manifest metadata, not settings

    const std::string path = section.empty() ? key : section + "." + key;
    if (path == "model") {
      if (value == "sgr")
        config.model = ModelKind::sgr;
      else if (value == "encoder-only")
        config.model = ModelKind::encoder_only;
      else
        p.fail("'model' must be 'sgr' or 'encoder-only', got '" + value + "'");
    } else if (path == "runs") {
      config.runs = p.to_int(key, value);
    } else if (path == "seed") {
      config.seed = p.to_uint(key, value);
    } else if (path == "threads") {
      config.threads = p.to_int(key, value);
    } else if (path == "output") {
      config.output = value;
    } else if (path == "dataset.cube_header") {
      config.cube_header = value;
    } else if (path == "dataset.cube_data") {
      config.cube_data = value;
    } else if (path == "dataset.labels_header") {
      config.labels_header = value;
    } else if (path == "dataset.labels_data") {
      config.labels_data = value;
    } else if (path == "encoder.features") {
      config.features = p.to_int(key, value);
    } else if (path == "graph.knn_k") {
      config.knn_k = p.to_int(key, value);
    } else if (path == "graph.dense_cap") {
      config.dense_cap = p.to_int(key, value);
    } else if (path == "pyramid.levels") {
      config.levels = p.to_int(key, value);
    } else if (path == "pyramid.pool_ratio") {
      config.pool_ratio = p.to_real(key, value);
    } else if (path == "pyramid.gcn_layers_per_level") {
      config.gcn_layers_per_level = p.to_int(key, value);
    } else if (path == "optimizer.lr") {
      config.lr = p.to_real(key, value);
    } else if (path == "optimizer.momentum") {
      config.momentum = p.to_real(key, value);
    } else if (path == "optimizer.weight_decay") {
      config.weight_decay = p.to_real(key, value);
    } else if (path == "optimizer.batch") {
      config.batch = p.to_int(key, value);
    } else if (path == "optimizer.epochs") {
      config.epochs = p.to_int(key, value);
    } else if (path == "optimizer.patience") {
      config.patience = p.to_int(key, value);
    } else if (path == "optimizer.min_delta") {
      config.min_delta = p.to_real(key, value);
    } else if (path == "optimizer.max_decays") {
      config.max_decays = p.to_int(key, value);
    } else if (path == "sampling.per_class") {
      config.per_class = p.to_int_list(key, value);
    } else if (path == "sampling.patch") {
      config.patch = p.to_int(key, value);
    } else if (path == "sampling.val_fraction") {
      config.val_fraction = p.to_real(key, value);
    } else {
      p.fail("unknown setting '" + path + "'");
    }
  }
  if (!section.empty())
    throw ParameterError(source_name + ": unterminated section '" + section + "'");
  config.validate();
  return config;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open config file " + path);
  return parse_config(in, path);
}

RunConfig parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in, "<string>");
}

std::string serialize_config(const RunConfig& config) {
  std::ostringstream out;
  const auto real = [](double v) {
    // Shortest representation that parses back to the same double.
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
  };
  out << "model: " << to_string(config.model) << "\n";
  out << "runs: " << config.runs << "\n";
  out << "seed: " << config.seed << "\n";
  out << "threads: " << config.threads << "\n";
  out << "output: " << config.output << "\n";
  if (!config.cube_header.empty() || !config.cube_data.empty() ||
      !config.labels_header.empty() || !config.labels_data.empty()) {
    out << "dataset {\n";
    if (!config.cube_header.empty()) out << "  cube_header: " << config.cube_header << "\n";
    if (!config.cube_data.empty()) out << "  cube_data: " << config.cube_data << "\n";
    if (!config.labels_header.empty())
      out << "  labels_header: " << config.labels_header << "\n";
    if (!config.labels_data.empty()) out << "  labels_data: " << config.labels_data << "\n";
    out << "}\n";
  }
  out << "encoder {\n  features: " << config.features << "\n}\n";
  out << "graph {\n  knn_k: " << config.knn_k << "\n  dense_cap: " << config.dense_cap
      << "\n}\n";
  out << "pyramid {\n  levels: " << config.levels
      << "\n  pool_ratio: " << real(config.pool_ratio)
      << "\n  gcn_layers_per_level: " << config.gcn_layers_per_level << "\n}\n";
  out << "optimizer {\n  lr: " << real(config.lr) << "\n  momentum: " << real(config.momentum)
      << "\n  weight_decay: " << real(config.weight_decay) << "\n  batch: " << config.batch
      << "\n  epochs: " << config.epochs << "\n  patience: " << config.patience
      << "\n  min_delta: " << real(config.min_delta)
      << "\n  max_decays: " << config.max_decays << "\n}\n";
  out << "sampling {\n  per_class: ";
  for (size_t i = 0; i < config.per_class.size(); ++i)
    out << (i ? "," : "") << config.per_class[i];
  out << "\n  patch: " << config.patch << "\n  val_fraction: " << real(config.val_fraction)
      << "\n}\n";
  return out.str();
}

}  // namespace sgr
