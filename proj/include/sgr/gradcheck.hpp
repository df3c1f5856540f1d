#pragma once

#include <functional>
#include <vector>

#include "sgr/graph.hpp"
#include "sgr/tensor.hpp"

namespace sgr {

/// Builds a scalar loss on the given record from leaf nodes registered for
/// the supplied parameter tensors (in order). Must be deterministic.
using ScalarFn =
    std::function<NodeId(Graph<double>&, const std::vector<NodeId>&)>;

/// Max over all parameter coordinates of
/// |analytic - central_difference| / max(1, |central_difference|),
/// evaluated in 64-bit precision.
inline double grad_check(const ScalarFn& fn, std::vector<Tensor64> params,
                         double eps = 1e-5) {
  const auto eval = [&](const std::vector<Tensor64>& p) -> double {
    Graph<double> record;
    std::vector<NodeId> ids;
    ids.reserve(p.size());
    for (const Tensor64& t : p) ids.push_back(record.leaf(t, false));
    const NodeId loss = fn(record, ids);
    const Tensor64& out = record.value(loss);
    if (out.size() != 1) throw ParameterError("grad_check: fn must be scalar-valued");
    if (!out.all_finite()) throw ParameterError("grad_check: non-finite output");
    return out[0];
  };

  // Analytic pass.
  Graph<double> record;
  std::vector<NodeId> ids;
  ids.reserve(params.size());
  for (const Tensor64& t : params) ids.push_back(record.leaf(t, true));
  const NodeId loss = fn(record, ids);
  if (record.value(loss).size() != 1)
    throw ParameterError("grad_check: fn must be scalar-valued");
  if (!record.value(loss).all_finite())
    throw ParameterError("grad_check: non-finite output");
  record.backward(loss);
  std::vector<Tensor64> analytic;
  analytic.reserve(ids.size());
  for (NodeId id : ids) analytic.push_back(record.grad(id));

  double worst = 0.0;
  for (size_t p = 0; p < params.size(); ++p) {
    for (int64_t c = 0; c < params[p].size(); ++c) {
      const double saved = params[p][c];
      params[p][c] = saved + eps;
      const double f_plus = eval(params);
      params[p][c] = saved - eps;
      const double f_minus = eval(params);
      params[p][c] = saved;
      const double fd = (f_plus - f_minus) / (2.0 * eps);
      const double err = std::abs(analytic[p][c] - fd) / std::max(1.0, std::abs(fd));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace sgr
