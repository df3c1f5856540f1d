#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sgr/rng.hpp"
#include "sgr/tensor.hpp"

namespace sgr {

/// Ordered, uniquely named trainable tensors. Order is the registration
/// order and is part of the training contract (gradient accumulation and
/// checkpoints address parameters by it).
template <typename T>
class ParamSet {
 public:
  int64_t add(std::string name, TensorT<T> value) {
    if (by_name_.contains(name))
      throw ParameterError("duplicate parameter name: " + name);
    const int64_t idx = static_cast<int64_t>(names_.size());
    by_name_.emplace(name, idx);
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
    return idx;
  }

  int64_t index(const std::string& name) const {
    const auto it = by_name_.find(name);
    if (it == by_name_.end()) throw ParameterError("unknown parameter: " + name);
    return it->second;
  }

  bool contains(const std::string& name) const { return by_name_.contains(name); }

  int64_t count() const { return static_cast<int64_t>(values_.size()); }

  int64_t scalar_count() const {
    int64_t n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
  }

  const std::string& name(int64_t i) const { return names_[static_cast<size_t>(i)]; }
  TensorT<T>& value(int64_t i) { return values_[static_cast<size_t>(i)]; }
  const TensorT<T>& value(int64_t i) const { return values_[static_cast<size_t>(i)]; }

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (int64_t i = 0; i < count(); ++i)
      out.add(names_[static_cast<size_t>(i)], values_[static_cast<size_t>(i)].template cast<U>());
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::vector<TensorT<T>> values_;
  std::map<std::string, int64_t> by_name_;
};

/// Fan-in-scaled uniform init: each entry uniform in [-b, b] with
/// b = sqrt(6 / fan_in).
template <typename T>
TensorT<T> fan_in_uniform(Shape shape, int64_t fan_in, Rng& rng) {
  TensorT<T> t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (int64_t i = 0; i < t.size(); ++i)
    t[i] = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

}  // namespace sgr
