#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sgr/checkpoint.hpp"
#include "sgr/config.hpp"
#include "sgr/data.hpp"
#include "sgr/gradcheck_suite.hpp"
#include "sgr/metrics.hpp"
#include "sgr/model.hpp"
#include "sgr/train.hpp"

namespace fs = std::filesystem;

namespace {

struct Overrides {
  std::optional<uint64_t> seed;
  std::optional<int64_t> threads;
  std::optional<int64_t> runs;
  std::optional<std::string> output;
};

void apply_overrides(sgr::RunConfig& config, const Overrides& ov) {
  if (ov.seed) config.seed = *ov.seed;
  if (ov.runs) config.runs = *ov.runs;
  if (ov.output) config.output = *ov.output;
  if (ov.threads) {
    config.threads = *ov.threads;
  } else if (const char* env = std::getenv("SGR_THREADS")) {
    try {
      const int64_t t = std::stoll(env);
      if (t >= 1) config.threads = t;
    } catch (const std::exception&) {
      throw sgr::ParameterError(std::string("SGR_THREADS must be a positive integer, got '") +
                                env + "'");
    }
  }
  config.validate();
}

struct Dataset {
  std::shared_ptr<const sgr::HsiCube> cube;
  sgr::LabelMap labels;
};

Dataset load_dataset(const sgr::RunConfig& config) {
  if (config.cube_header.empty() || config.cube_data.empty() ||
      config.labels_header.empty() || config.labels_data.empty())
    throw sgr::ParameterError("config: dataset paths (cube_header, cube_data, "
                              "labels_header, labels_data) are required");
  Dataset d;
  d.cube = std::make_shared<const sgr::HsiCube>(
      sgr::load_cube(config.cube_data, config.cube_header));
  d.labels = sgr::load_labels(config.labels_data, config.labels_header);
  return d;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw sgr::IngestionError("cannot write " + path.string());
  out << text;
}

std::string manifest_text(const sgr::RunConfig& config, const sgr::ModelConfig& model_cfg,
                          int64_t parameter_count, int64_t train_count, int64_t test_count) {
  std::ostringstream out;
  out << serialize_config(config);
  out << "provenance {\n";
  out << "  parameter_count: " << parameter_count << "\n";
  out << "  bands: " << model_cfg.bands << "\n";
  out << "  classes: " << model_cfg.classes << "\n";
  out << "  graph_nodes: " << model_cfg.node_count() << "\n";
  out << "  node_width: " << model_cfg.node_width() << "\n";
  out << "  level_sizes: ";
  const auto sizes =
      model_cfg.kind == sgr::ModelKind::sgr ? model_cfg.level_sizes()
                                            : std::vector<int64_t>{model_cfg.node_count()};
  for (size_t i = 0; i < sizes.size(); ++i) out << (i ? "," : "") << sizes[i];
  out << "\n";
  out << "  train_samples: " << train_count << "\n";
  out << "  test_samples: " << test_count << "\n";
  out << "  run_seeds: ";
  for (int64_t r = 0; r < config.runs; ++r) out << (r ? "," : "") << config.seed + static_cast<uint64_t>(r);
  out << "\n";
  out << "  checkpoint_format: SGRM v1\n";
  out << "  cube_format: SGRC v1\n";
  out << "  label_format: SGRL v1\n";
  out << "  validation_error_metric: 1-OA\n";
  out << "}\n";
  return out.str();
}

int cmd_train(const sgr::RunConfig& config) {
  const Dataset data = load_dataset(config);
  const auto per_class = config.resolved_per_class(data.labels.classes);
  auto [train, test] =
      sgr::extract_samples(data.cube, data.labels, per_class, config.seed, config.patch);
  auto [fit, val] = sgr::split_train_val(train, config.val_fraction, config.seed);
  const sgr::ModelConfig model_cfg =
      config.to_model_config(data.cube->bands, data.labels.classes);
  const sgr::TrainOptions options = config.to_train_options();

  const fs::path out_dir(config.output);
  fs::create_directories(out_dir);
  {
    const sgr::SgrModel probe(model_cfg, config.seed);
    write_text(out_dir / "manifest.conf",
               manifest_text(config, model_cfg, probe.params().scalar_count(),
                             train.size(), test.size()));
    std::printf("model: %s, parameters: %lld, graph nodes: %lld\n",
                sgr::to_string(model_cfg.kind),
                static_cast<long long>(probe.params().scalar_count()),
                static_cast<long long>(model_cfg.node_count()));
  }

  std::vector<sgr::MetricsReport> reports;
  for (int64_t r = 0; r < config.runs; ++r) {
    const uint64_t run_seed = config.seed + static_cast<uint64_t>(r);
    std::printf("run %lld/%lld (seed %llu)\n", static_cast<long long>(r + 1),
                static_cast<long long>(config.runs),
                static_cast<unsigned long long>(run_seed));
    const sgr::RunResult result = sgr::train_single_run(
        model_cfg, fit, val, options, run_seed, [&](const sgr::EpochStat& stat) {
          if (stat.epoch % 10 == 0 || stat.epoch == 1)
            std::printf("  epoch %lld  loss %.4f  val-error %.4f  lr %g\n",
                        static_cast<long long>(stat.epoch), stat.train_loss,
                        stat.val_error, stat.lr);
        });
    const std::string tag = "_run" + std::to_string(r);
    write_text(out_dir / ("history" + tag + ".tsv"), sgr::format_history(result.history));
    sgr::save_checkpoint(result.best_params, (out_dir / ("model" + tag + ".ckpt")).string());

    const sgr::SgrModel best(model_cfg, result.best_params);
    sgr::MetricsReport report =
        sgr::evaluate(best, test, static_cast<int>(config.threads));
    report.run_index = r;
    write_text(out_dir / ("metrics" + tag + ".txt"), sgr::format_report(report));
    std::printf("  best epoch %lld, test OA %.2f AA %.2f Kappa %.2f\n",
                static_cast<long long>(result.best_epoch), report.oa, report.aa,
                report.kappa);
    reports.push_back(std::move(report));
  }

  const sgr::MetricsReport mean = sgr::average_reports(reports);
  write_text(out_dir / "metrics_mean.txt", sgr::format_report(mean));
  std::printf("mean over %lld run(s): OA %.2f AA %.2f Kappa %.2f\n",
              static_cast<long long>(config.runs), mean.oa, mean.aa, mean.kappa);
  if (train.clamped_values() + test.clamped_values() > 0)
    std::printf("normalization clamped %lld train / %lld test values\n",
                static_cast<long long>(train.clamped_values()),
                static_cast<long long>(test.clamped_values()));
  return 0;
}

int cmd_eval(const sgr::RunConfig& config, const std::string& model_path) {
  const Dataset data = load_dataset(config);
  const auto per_class = config.resolved_per_class(data.labels.classes);
  auto [train, test] =
      sgr::extract_samples(data.cube, data.labels, per_class, config.seed, config.patch);
  const sgr::ModelConfig model_cfg =
      config.to_model_config(data.cube->bands, data.labels.classes);
  const sgr::SgrModel model(model_cfg, sgr::load_checkpoint(model_path));
  const sgr::MetricsReport report =
      sgr::evaluate(model, test, static_cast<int>(config.threads));
  std::fputs(sgr::format_report(report).c_str(), stdout);
  return 0;
}

int cmd_map(const sgr::RunConfig& config, const std::string& model_path,
            const std::string& out_path, bool all_pixels, bool truth_only) {
  const Dataset data = load_dataset(config);
  const int64_t height = data.labels.height;
  const int64_t width = data.labels.width;
  const auto palette = sgr::class_palette(data.labels.classes);

  if (truth_only) {
    sgr::render_map_file(data.labels.ids, height, width, palette, out_path);
    std::printf("wrote ground-truth map %s\n", out_path.c_str());
    return 0;
  }

  const auto per_class = config.resolved_per_class(data.labels.classes);
  auto [train, test] =
      sgr::extract_samples(data.cube, data.labels, per_class, config.seed, config.patch);
  const sgr::ModelConfig model_cfg =
      config.to_model_config(data.cube->bands, data.labels.classes);
  const sgr::SgrModel model(model_cfg, sgr::load_checkpoint(model_path));

  // Prediction set over the requested pixels, normalized like training data.
  std::vector<sgr::SampleSet::Entry> entries;
  for (int64_t y = 0; y < height; ++y)
    for (int64_t x = 0; x < width; ++x)
      if (all_pixels || data.labels.at(y, x) != 0) entries.push_back({y, x, 1});
  const sgr::SampleSet targets = train.with_entries(std::move(entries), sgr::SampleRole::test);

  std::vector<uint16_t> predicted(static_cast<size_t>(height * width), 0);
  for (int64_t i = 0; i < targets.size(); ++i) {
    const auto& e = targets.entry(i);
    predicted[static_cast<size_t>(e.y * width + e.x)] =
        static_cast<uint16_t>(model.predict(targets.patch(i)) + 1);
  }
  sgr::render_map_file(predicted, height, width, palette, out_path);
  std::printf("wrote prediction map %s (%lld pixels)\n", out_path.c_str(),
              static_cast<long long>(targets.size()));
  return 0;
}

int cmd_synth(const sgr::SynthSpec& spec, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const auto [cube, labels] = sgr::synth_cube(spec);
  const fs::path dir(out_dir);
  sgr::write_cube(cube, (dir / "cube.f32").string(), (dir / "cube.hdr").string());
  sgr::write_labels(labels, (dir / "labels.u16").string(), (dir / "labels.hdr").string());
  std::printf("wrote %lld-band %lldx%lld cube with %lld classes under %s\n",
              static_cast<long long>(cube.bands), static_cast<long long>(cube.height),
              static_cast<long long>(cube.width), static_cast<long long>(labels.classes),
              out_dir.c_str());
  return 0;
}

int cmd_gradcheck(const std::string& scale_name) {
  sgr::GradCheckScale scale;
  if (scale_name == "tiny")
    scale = sgr::GradCheckScale::tiny;
  else if (scale_name == "small")
    scale = sgr::GradCheckScale::small;
  else if (scale_name == "full")
    scale = sgr::GradCheckScale::full;
  else
    throw sgr::ParameterError("--scale must be tiny, small, or full");

  const auto entries = sgr::run_gradcheck_suite(scale);
  for (const auto& e : entries)
    std::printf("%-28s %.3e\n", e.name.c_str(), e.max_rel_err);
  const double worst = sgr::worst_error(entries);
  std::printf("max relative error: %.6e\n", worst);
  return worst < 1e-4 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral graph reasoning for hyperspectral image classification"};
  app.require_subcommand(1);

  Overrides ov;
  std::string config_path;
  std::string model_path;
  std::string out_path;

  const auto add_common = [&](CLI::App* cmd, bool needs_config) {
    auto* c = cmd->add_option("-c,--config", config_path, "configuration file");
    if (needs_config) c->required();
    cmd->add_option_function<uint64_t>("--seed", [&](uint64_t v) { ov.seed = v; },
                                       "override the config seed");
    cmd->add_option_function<int64_t>("--threads", [&](int64_t v) { ov.threads = v; },
                                      "worker threads (or env SGR_THREADS)");
  };

  auto* train = app.add_subcommand("train", "train on a converted cube and emit artifacts");
  add_common(train, true);
  train->add_option_function<std::string>("-o,--out", [&](std::string v) { ov.output = v; },
                                          "output directory (overrides config)");
  train->add_option_function<int64_t>("--runs", [&](int64_t v) { ov.runs = v; },
                                      "override the number of training sessions");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  add_common(eval, true);
  eval->add_option("-m,--model", model_path, "checkpoint path")->required();

  auto* map = app.add_subcommand("map", "render a P6 classification map");
  add_common(map, true);
  map->add_option("-m,--model", model_path, "checkpoint path");
  map->add_option("-o,--out", out_path, "output .ppm path")->required();
  bool all_pixels = false;
  bool truth_only = false;
  map->add_flag("--all-pixels", all_pixels, "predict every pixel, not only labeled ones");
  map->add_flag("--truth", truth_only, "render the ground-truth labels instead");

  auto* synth = app.add_subcommand("synth", "write a seeded synthetic cube and label map");
  sgr::SynthSpec spec;
  synth->add_option("-o,--out", out_path, "output directory")->required();
  synth->add_option("--classes", spec.classes, "number of classes (2-16)");
  synth->add_option("--bands", spec.bands, "spectral bands");
  synth->add_option("--height", spec.height, "image height");
  synth->add_option("--width", spec.width, "image width");
  synth->add_option("--noise", spec.noise, "additive Gaussian sigma");
  synth->add_option("--seed", spec.seed, "generator seed");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient audit");
  std::string scale = "small";
  gradcheck->add_option("--scale", scale, "tiny, small, or full")
      ->check(CLI::IsMember({"tiny", "small", "full"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed() || eval->parsed() || (map->parsed() && !truth_only)) {
      if (map->parsed() && model_path.empty())
        throw sgr::ParameterError("map: -m/--model is required unless --truth is given");
    }
    if (synth->parsed()) return cmd_synth(spec, out_path);
    if (gradcheck->parsed()) return cmd_gradcheck(scale);

    sgr::RunConfig config = sgr::parse_config_file(config_path);
    apply_overrides(config, ov);
    if (train->parsed()) return cmd_train(config);
    if (eval->parsed()) return cmd_eval(config, model_path);
    if (map->parsed()) return cmd_map(config, model_path, out_path, all_pixels, truth_only);
    return 1;
  } catch (const sgr::StructureError& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 2;
  } catch (const sgr::DimensionError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const sgr::ParameterError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const sgr::IngestionError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 2;
  }
}
