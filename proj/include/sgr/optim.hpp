#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sgr/params.hpp"
#include "sgr/tensor.hpp"

namespace sgr {

/// Classic momentum SGD with coupled weight decay:
///   g' = g + wd * theta;  v <- momentum * v + g';  theta <- theta - lr * v.
class SgdOptimizer {
 public:
  SgdOptimizer(double lr, double momentum, double weight_decay)
      : lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {
    if (lr <= 0.0) throw ParameterError("sgd: learning rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0)
      throw ParameterError("sgd: momentum must be in [0, 1)");
    if (weight_decay < 0.0) throw ParameterError("sgd: weight decay must be >= 0");
  }

  double learning_rate() const { return lr_; }

  /// Learning rate may only be lowered over a run.
  void set_learning_rate(double lr) {
    if (lr <= 0.0 || lr > lr_)
      throw ParameterError("sgd: learning rate must stay positive and non-increasing");
    lr_ = lr;
  }

  /// Aborts with diagnostics if any gradient entry is non-finite.
  void step(ParamSet<float>& params, const std::vector<Tensor>& grads) {
    if (static_cast<int64_t>(grads.size()) != params.count())
      throw ParameterError("sgd: gradient count does not match parameter count");
    if (velocity_.empty()) {
      velocity_.reserve(grads.size());
      for (int64_t i = 0; i < params.count(); ++i)
        velocity_.emplace_back(params.value(i).shape());
    }
    for (int64_t i = 0; i < params.count(); ++i) {
      const Tensor& g = grads[static_cast<size_t>(i)];
      if (!g.all_finite())
        throw ParameterError("sgd: non-finite gradient for parameter '" + params.name(i) +
                             "'");
      Tensor& v = velocity_[static_cast<size_t>(i)];
      Tensor& theta = params.value(i);
      if (!g.same_shape(theta))
        throw DimensionError("sgd: gradient shape mismatch for '" + params.name(i) + "'");
      const float lr = static_cast<float>(lr_);
      const float mu = static_cast<float>(momentum_);
      const float wd = static_cast<float>(weight_decay_);
      for (int64_t c = 0; c < theta.size(); ++c) {
        const float adjusted = g[c] + wd * theta[c];
        v[c] = mu * v[c] + adjusted;
        theta[c] -= lr * v[c];
      }
    }
  }

 private:
  double lr_;
  double momentum_;
  double weight_decay_;
  std::vector<Tensor> velocity_;
};

/// Divide-by-10 plateau rule: after `patience` consecutive epochs without the
/// best validation error improving by at least `min_delta`, signal a decay
/// (up to `max_decays` times). Stands in for the manual schedule.
class PlateauScheduler {
 public:
  PlateauScheduler(int64_t patience, double min_delta, int64_t max_decays)
      : patience_(patience), min_delta_(min_delta), max_decays_(max_decays) {
    if (patience < 1) throw ParameterError("plateau: patience must be >= 1");
    if (min_delta < 0.0) throw ParameterError("plateau: min_delta must be >= 0");
    if (max_decays < 0) throw ParameterError("plateau: max_decays must be >= 0");
  }

  /// Feed one epoch's validation error; true means "decay the rate now".
  bool observe(double val_error) {
    if (val_error < best_ - min_delta_) {
      best_ = val_error;
      stall_ = 0;
      return false;
    }
    ++stall_;
    if (stall_ >= patience_ && decays_ < max_decays_) {
      stall_ = 0;
      ++decays_;
      return true;
    }
    return false;
  }

  int64_t decays() const { return decays_; }

 private:
  int64_t patience_;
  double min_delta_;
  int64_t max_decays_;
  double best_ = std::numeric_limits<double>::infinity();
  int64_t stall_ = 0;
  int64_t decays_ = 0;
};

}  // namespace sgr
