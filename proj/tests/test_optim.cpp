#include <doctest.h>

#include <cmath>
#include <memory>

#include "sgr/data.hpp"
#include "sgr/optim.hpp"
#include "sgr/rng.hpp"
#include "sgr/train.hpp"

using namespace sgr;

namespace {

ParamSet<float> scalar_params(float value) {
  ParamSet<float> p;
  p.add("theta", Tensor({1}, {value}));
  return p;
}

struct SynthTask {
  std::shared_ptr<const HsiCube> cube;
  SampleSet fit;
  SampleSet val;
  ModelConfig cfg;
};

SynthTask small_task(uint64_t seed, int64_t per_class = 8) {
  SynthSpec spec;
  spec.classes = 3;
  spec.bands = 16;
  spec.height = 24;
  spec.width = 24;
  spec.noise = 0.15;
  spec.seed = seed;
  auto [cube, labels] = synth_cube(spec);
  SynthTask task;
  task.cube = std::make_shared<const HsiCube>(std::move(cube));
  auto [train, test] = extract_samples(
      task.cube, labels, std::vector<int64_t>(3, per_class), seed, 3);
  auto [fit, val] = split_train_val(train, 0.75, seed);
  task.fit = std::move(fit);
  task.val = std::move(val);
  task.cfg.bands = 16;
  task.cfg.patch = 3;
  task.cfg.features = 4;
  task.cfg.knn_k = 3;
  task.cfg.levels = 1;
  task.cfg.classes = 3;
  return task;
}

}  // namespace

TEST_SUITE("train-metrics") {

TEST_CASE("sgd: zero gradient and zero decay leave parameters untouched") {
  ParamSet<float> p = scalar_params(1.0f);
  SgdOptimizer opt(0.1, 0.9, 0.0);
  opt.step(p, {Tensor({1})});
  opt.step(p, {Tensor({1})});
  CHECK(p.value(0)[0] == 1.0f);
}

TEST_CASE("sgd: hand-evaluated momentum recurrence") {
  ParamSet<float> p = scalar_params(1.0f);
  SgdOptimizer opt(0.1, 0.9, 0.0);
  opt.step(p, {Tensor({1}, {0.2f})});
  CHECK(p.value(0)[0] == doctest::Approx(0.98).epsilon(1e-7));
  opt.step(p, {Tensor({1}, {0.2f})});
  // v = 0.9*0.2 + 0.2 = 0.38; theta = 0.98 - 0.038 = 0.942
  CHECK(p.value(0)[0] == doctest::Approx(0.942).epsilon(1e-7));
}

TEST_CASE("sgd: single-step weight decay") {
  ParamSet<float> p = scalar_params(1.0f);
  SgdOptimizer opt(0.05, 0.9, 0.0005);
  opt.step(p, {Tensor({1}, {0.0f})});
  // g' = 0.0005, v = 0.0005, theta = 1 - 0.05*0.0005 = 0.999975
  CHECK(p.value(0)[0] == doctest::Approx(0.999975).epsilon(1e-6));
}

TEST_CASE("sgd: learning rate may only decrease; non-finite gradients abort") {
  ParamSet<float> p = scalar_params(1.0f);
  SgdOptimizer opt(0.1, 0.9, 0.0);
  CHECK_THROWS_AS(opt.set_learning_rate(0.2), ParameterError);
  opt.set_learning_rate(0.01);
  CHECK(opt.learning_rate() == 0.01);
  Tensor bad({1}, {std::numeric_limits<float>::quiet_NaN()});
  CHECK_THROWS_AS(opt.step(p, {bad}), ParameterError);
}

TEST_CASE("sgd with lr approaching zero is the identity in the limit") {
  // lr = 0 is rejected; the identity behaviour is covered by zero gradients
  // plus zero decay above, and tiny lr moves parameters by lr * v exactly.
  ParamSet<float> p = scalar_params(2.0f);
  SgdOptimizer opt(1e-30, 0.0, 0.0);
  opt.step(p, {Tensor({1}, {1.0f})});
  CHECK(p.value(0)[0] == 2.0f);  // update underflows a float at this scale
}

TEST_CASE("plateau: strictly improving history never decays") {
  PlateauScheduler sched(20, 1e-3, 2);
  double err = 1.0;
  for (int epoch = 0; epoch < 500; ++epoch) {
    CHECK_FALSE(sched.observe(err));
    err -= 0.01;
  }
  CHECK(sched.decays() == 0);
}

TEST_CASE("plateau: constant history decays exactly at epoch 21 of the plateau") {
  PlateauScheduler sched(20, 1e-3, 2);
  CHECK_FALSE(sched.observe(0.5));  // establishes the best
  for (int epoch = 2; epoch <= 20; ++epoch) CHECK_FALSE(sched.observe(0.5));
  CHECK(sched.observe(0.5));  // 20th consecutive stall
  CHECK(sched.decays() == 1);
}

TEST_CASE("plateau: min-delta boundary trace matches the scripted reference") {
  // Improvements smaller than min_delta do not reset the stall counter.
  PlateauScheduler sched(3, 0.1, 5);
  struct Step {
    double err;
    bool decay;
  };
  // best=1.0; 0.95 and 0.92 are within min_delta, stall 1,2; third stall decays.
  const Step trace[] = {
      {1.00, false}, {0.95, false}, {0.92, false}, {0.91, true},
      {0.50, false},                      // real improvement, best=0.5
      {0.49, false}, {0.48, false}, {0.47, true},  // three stalls again
  };
  for (const auto& step : trace) CHECK(sched.observe(step.err) == step.decay);
  CHECK(sched.decays() == 2);
}

TEST_CASE("plateau: decay count is capped") {
  PlateauScheduler sched(1, 1e-3, 2);
  CHECK_FALSE(sched.observe(0.5));
  CHECK(sched.observe(0.5));
  CHECK(sched.observe(0.5));
  for (int i = 0; i < 10; ++i) CHECK_FALSE(sched.observe(0.5));
  CHECK(sched.decays() == 2);
}

TEST_CASE("train: one epoch with fewer samples than one batch is one step") {
  SynthTask task = small_task(101, 5);  // 9 fit samples, batch 30
  TrainOptions options;
  options.epochs = 1;
  options.lr = 0.01;
  const RunResult result = train_single_run(task.cfg, task.fit, task.val, options, 7);
  CHECK(result.optimizer_steps == 1);
  CHECK(result.history.size() == 1);
}

TEST_CASE("train: batching arithmetic uses ceil(n / batch) steps per epoch") {
  SynthTask task = small_task(102, 8);  // 18 fit samples
  TrainOptions options;
  options.epochs = 2;
  options.batch = 5;
  options.lr = 0.01;
  const RunResult result = train_single_run(task.cfg, task.fit, task.val, options, 7);
  CHECK(result.optimizer_steps == 2 * ((task.fit.size() + 4) / 5));
}

TEST_CASE("train: loss decreases over the first epochs of the seeded task") {
  SynthTask task = small_task(103, 10);
  TrainOptions options;
  options.epochs = 5;
  options.batch = 10;
  options.lr = 0.01;
  const RunResult result = train_single_run(task.cfg, task.fit, task.val, options, 11);
  REQUIRE(result.history.size() == 5);
  CHECK(result.history.back().train_loss < result.history.front().train_loss);
}

TEST_CASE("train: fixed seeds give bitwise-identical histories and parameters") {
  SynthTask task = small_task(104, 6);
  TrainOptions options;
  options.epochs = 3;
  options.batch = 6;
  options.lr = 0.01;
  const RunResult a = train_single_run(task.cfg, task.fit, task.val, options, 13);
  const RunResult b = train_single_run(task.cfg, task.fit, task.val, options, 13);
  CHECK(format_history(a.history) == format_history(b.history));
  REQUIRE(a.best_params.count() == b.best_params.count());
  for (int64_t i = 0; i < a.best_params.count(); ++i)
    CHECK(a.best_params.value(i) == b.best_params.value(i));
}

TEST_CASE("history format: one tab-separated line per epoch") {
  std::vector<EpochStat> history{{1, 0.5, 0.25, 0.05}, {2, 0.25, 0.2, 0.05}};
  const std::string text = format_history(history);
  CHECK(text == "1\t0.5\t0.25\t0.05\n2\t0.25\t0.2\t0.05\n");
}

TEST_CASE("evaluate merges worker partials identically for any thread count") {
  SynthTask task = small_task(105, 10);
  SgrModel model(task.cfg, 3);
  const MetricsReport one = evaluate(model, task.fit, 1);
  const MetricsReport four = evaluate(model, task.fit, 4);
  CHECK(one.confusion == four.confusion);
  CHECK(one.oa == four.oa);
}

}  // TEST_SUITE
