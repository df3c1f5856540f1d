#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sgr/data.hpp"
#include "sgr/metrics.hpp"
#include "sgr/model.hpp"

namespace sgr {

struct TrainOptions {
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  int64_t batch = 30;
  int64_t epochs = 500;
  int64_t patience = 20;
  double min_delta = 1e-3;
  int64_t max_decays = 2;
  int threads = 1;
};

struct EpochStat {
  int64_t epoch = 0;      // 1-based
  double train_loss = 0;  // sample-weighted mean over the epoch
  double val_error = 0;   // 1 - OA/100 on the validation split
  double lr = 0;          // rate used during the epoch
};

struct RunResult {
  uint64_t seed = 0;
  std::vector<EpochStat> history;
  ParamSet<float> best_params;  // parameters at the best validation error
  double best_val_error = 0.0;
  int64_t best_epoch = 0;
  int64_t optimizer_steps = 0;
  int64_t lr_decays = 0;
};

/// One seeded training session: shuffled mini-batches, per-epoch validation,
/// plateau-decayed learning rate, best-validation checkpointing.
/// `on_epoch`, when set, is called after each epoch's bookkeeping.
RunResult train_single_run(const ModelConfig& model_cfg, const SampleSet& fit,
                           const SampleSet& val, const TrainOptions& options,
                           uint64_t seed,
                           const std::function<void(const EpochStat&)>& on_epoch = {});

/// Confusion-matrix evaluation over a sample set; worker partials merge in
/// worker order.
MetricsReport evaluate(const SgrModel& model, const SampleSet& samples, int threads = 1);

/// Tab-separated history: epoch, train-loss, val-error, lr; one line/epoch.
std::string format_history(const std::vector<EpochStat>& history);

}  // namespace sgr
