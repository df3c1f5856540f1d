#include "sgr/train.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <thread>

#include "sgr/optim.hpp"
#include "sgr/rng.hpp"

namespace sgr {

RunResult train_single_run(const ModelConfig& model_cfg, const SampleSet& fit,
                           const SampleSet& val, const TrainOptions& options,
                           uint64_t seed,
                           const std::function<void(const EpochStat&)>& on_epoch) {
  if (fit.size() < 1 || val.size() < 1)
    throw ParameterError("train: fit and validation sets must be non-empty");
  if (options.batch < 1) throw ParameterError("train: batch must be >= 1");
  if (options.epochs < 1) throw ParameterError("train: epochs must be >= 1");

  SgrModel model(model_cfg, seed);
  SgdOptimizer optimizer(options.lr, options.momentum, options.weight_decay);
  PlateauScheduler scheduler(options.patience, options.min_delta, options.max_decays);
  Rng shuffle_rng(seed ^ 0x9e3779b97f4a7c15ull);

  RunResult result;
  result.seed = seed;
  result.best_val_error = std::numeric_limits<double>::infinity();

  std::vector<int64_t> order(static_cast<size_t>(fit.size()));
  std::iota(order.begin(), order.end(), 0);

  for (int64_t epoch = 1; epoch <= options.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    const double lr_used = optimizer.learning_rate();
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(options.batch)) {
      const size_t end =
          std::min(order.size(), start + static_cast<size_t>(options.batch));
      std::vector<Tensor> patches;
      std::vector<int64_t> labels;
      patches.reserve(end - start);
      labels.reserve(end - start);
      for (size_t i = start; i < end; ++i) {
        patches.push_back(fit.patch(order[i]));
        labels.push_back(fit.label(order[i]) - 1);
      }
      std::vector<Tensor> grads;
      const double batch_loss =
          batch_gradients(model, patches, labels, grads, options.threads);
      optimizer.step(model.params(), grads);
      ++result.optimizer_steps;
      loss_sum += batch_loss * static_cast<double>(end - start);
    }

    const MetricsReport val_report = evaluate(model, val, options.threads);
    const double val_error = 1.0 - val_report.oa / 100.0;

    EpochStat stat;
    stat.epoch = epoch;
    stat.train_loss = loss_sum / static_cast<double>(fit.size());
    stat.val_error = val_error;
    stat.lr = lr_used;
    result.history.push_back(stat);

    if (val_error < result.best_val_error) {
      result.best_val_error = val_error;
      result.best_epoch = epoch;
      result.best_params = model.params();
    }
    if (scheduler.observe(val_error)) {
      optimizer.set_learning_rate(optimizer.learning_rate() / 10.0);
      ++result.lr_decays;
    }
    if (on_epoch) on_epoch(stat);
  }
  if (result.best_epoch == 0) result.best_params = model.params();
  return result;
}

MetricsReport evaluate(const SgrModel& model, const SampleSet& samples, int threads) {
  if (samples.size() < 1) throw ParameterError("evaluate: empty sample set");
  const int64_t classes = model.config().classes;
  const size_t total = static_cast<size_t>(samples.size());
  const size_t workers =
      std::max<size_t>(1, std::min<size_t>(static_cast<size_t>(std::max(threads, 1)), total));

  std::vector<std::vector<int64_t>> partial(
      workers, std::vector<int64_t>(static_cast<size_t>(classes * classes), 0));
  std::vector<std::exception_ptr> errors(workers);

  const auto run_range = [&](size_t w, size_t begin, size_t end) {
    try {
      auto& confusion = partial[w];
      for (size_t i = begin; i < end; ++i) {
        const int64_t truth = samples.label(static_cast<int64_t>(i)) - 1;
        const int64_t pred = model.predict(samples.patch(static_cast<int64_t>(i)));
        ++confusion[static_cast<size_t>(truth * classes + pred)];
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };

  if (workers == 1) {
    run_range(0, 0, total);
  } else {
    std::vector<std::thread> pool;
    const size_t chunk = (total + workers - 1) / workers;
    for (size_t w = 0; w < workers; ++w) {
      const size_t begin = w * chunk;
      const size_t end = std::min(total, begin + chunk);
      pool.emplace_back([&run_range, w, begin, end] { run_range(w, begin, end); });
    }
    for (auto& t : pool) t.join();
  }
  for (const auto& err : errors)
    if (err) std::rethrow_exception(err);

  std::vector<int64_t> confusion(static_cast<size_t>(classes * classes), 0);
  for (const auto& part : partial)
    for (size_t i = 0; i < confusion.size(); ++i) confusion[i] += part[i];
  return metrics_from_confusion(confusion, classes);
}

std::string format_history(const std::vector<EpochStat>& history) {
  std::ostringstream out;
  char buf[128];
  for (const auto& stat : history) {
    std::snprintf(buf, sizeof(buf), "%lld\t%.9g\t%.9g\t%.9g\n",
                  static_cast<long long>(stat.epoch), stat.train_loss, stat.val_error,
                  stat.lr);
    out << buf;
  }
  return out.str();
}

}  // namespace sgr
