#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "sgr/tensor.hpp"

namespace sgr {

using NodeId = int32_t;

enum class PadMode { valid, same };

/// Per-axis padding mode and dilation for conv3d. Axis order: depth
/// (spectral), height, width. Stride is always 1.
struct Conv3dSpec {
  std::array<PadMode, 3> pad{PadMode::valid, PadMode::valid, PadMode::valid};
  std::array<int, 3> dilation{1, 1, 1};
};

namespace detail {

// c[m x n] += a[m x k] * b[k x n]
template <typename T>
void mm_nn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m x k] += a[m x n] * b[k x n]^T
template <typename T>
void mm_nt(const T* a, const T* b, T* c, int64_t m, int64_t n, int64_t k) {
  for (int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * n;
    T* crow = c + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const T* brow = b + p * n;
      T s = T(0);
      for (int64_t j = 0; j < n; ++j) s += arow[j] * brow[j];
      crow[p] += s;
    }
  }
}

// c[k x n] += a[m x k]^T * b[m x n]
template <typename T>
void mm_tn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    const T* brow = b + i * n;
    for (int64_t p = 0; p < k; ++p) {
      const T av = arow[p];
      T* crow = c + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

struct ConvAxis {
  int64_t in = 0;
  int64_t kernel = 0;
  int64_t out = 0;
  int64_t pad_lo = 0;
  int64_t dilation = 1;
};

inline ConvAxis conv_axis(int64_t in, int64_t kernel, PadMode pad, int dilation,
                          const char* axis_name) {
  if (dilation < 1) throw ParameterError("conv3d: dilation must be >= 1");
  ConvAxis a;
  a.in = in;
  a.kernel = kernel;
  a.dilation = dilation;
  const int64_t effective = dilation * (kernel - 1) + 1;
  if (pad == PadMode::valid) {
    a.out = in - effective + 1;
    a.pad_lo = 0;
    if (a.out < 1)
      throw DimensionError(std::string("conv3d: dilated kernel (extent ") +
                           std::to_string(effective) + ") exceeds input (" +
                           std::to_string(in) + ") on " + axis_name + " axis");
  } else {
    a.out = in;
    a.pad_lo = (effective - 1) / 2;
  }
  return a;
}

// For a fixed kernel tap offset, the output range whose input index stays in
// bounds: in = out + tap - pad_lo must lie in [0, in_extent).
inline void tap_range(const ConvAxis& a, int64_t tap, int64_t& lo, int64_t& hi) {
  const int64_t shift = tap * a.dilation - a.pad_lo;
  lo = std::max<int64_t>(0, -shift);
  hi = std::min<int64_t>(a.out, a.in - shift);
}

}  // namespace detail

/// Recorded computation over tensors, replayable and differentiable in
/// reverse mode. Node values are retained as the saved activations; a record
/// is confined to one thread for its whole forward/backward lifetime.
template <typename T>
class Graph {
 public:
  using TensorType = TensorT<T>;

  enum class Op {
    leaf,
    matmul,
    conv3d,
    sigmoid,
    tanh_fn,
    relu,
    hadamard,
    add,
    scale_add,
    scale_rows,
    gather_rows,
    scatter_rows,
    concat,
    reshape,
    sum_all,
    softmax_ce,
  };

  NodeId leaf(TensorType value, bool requires_grad = false) {
    Node node;
    node.op = Op::leaf;
    node.value = std::move(value);
    node.needs_grad = requires_grad;
    return push(std::move(node));
  }

  NodeId matmul(NodeId a, NodeId b) {
    const TensorType& ta = value(a);
    const TensorType& tb = value(b);
    if (ta.rank() != 2 || tb.rank() != 2 || ta.extent(1) != tb.extent(0))
      throw DimensionError("matmul: incompatible shapes " + shape_str(ta.shape()) +
                           " and " + shape_str(tb.shape()));
    Node node = make(Op::matmul, {a, b});
    node.value = TensorType({ta.extent(0), tb.extent(1)});
    detail::mm_nn(ta.raw(), tb.raw(), node.value.raw(), ta.extent(0), ta.extent(1),
                  tb.extent(1));
    return push(std::move(node));
  }

  NodeId conv3d(NodeId x, NodeId kernel, const Conv3dSpec& spec) {
    const TensorType& tx = value(x);
    const TensorType& tk = value(kernel);
    if (tx.rank() != 4 || tk.rank() != 5)
      throw DimensionError("conv3d: expected input rank 4 and kernel rank 5, got " +
                           shape_str(tx.shape()) + " and " + shape_str(tk.shape()));
    if (tx.extent(0) != tk.extent(1))
      throw DimensionError("conv3d: input channels " + std::to_string(tx.extent(0)) +
                           " != kernel channels " + std::to_string(tk.extent(1)));
    Node node = make(Op::conv3d, {x, kernel});
    node.conv = spec;
    node.value = conv_forward(tx, tk, spec);
    return push(std::move(node));
  }

  NodeId sigmoid(NodeId x) { return unary(Op::sigmoid, x); }
  NodeId tanh(NodeId x) { return unary(Op::tanh_fn, x); }
  NodeId relu(NodeId x) { return unary(Op::relu, x); }

  NodeId hadamard(NodeId a, NodeId b) { return binary(Op::hadamard, a, b); }
  NodeId add(NodeId a, NodeId b) { return binary(Op::add, a, b); }

  /// y = mul * x + off, elementwise with scalar coefficients.
  NodeId scale_add(NodeId x, T mul, T off) {
    Node node = make(Op::scale_add, {x});
    node.mul = mul;
    node.off = off;
    const TensorType& tx = value(x);
    node.value = TensorType(tx.shape());
    for (int64_t i = 0; i < tx.size(); ++i) node.value[i] = mul * tx[i] + off;
    return push(std::move(node));
  }

  NodeId scale(NodeId x, T mul) { return scale_add(x, mul, T(0)); }

  /// Row i of x scaled by s[i]; s is 1-D with extent matching x's leading axis.
  NodeId scale_rows(NodeId x, NodeId s) {
    const TensorType& tx = value(x);
    const TensorType& ts = value(s);
    if (tx.rank() < 1 || ts.rank() != 1 || ts.extent(0) != tx.extent(0))
      throw DimensionError("scale_rows: shapes " + shape_str(tx.shape()) + " and " +
                           shape_str(ts.shape()) + " do not align");
    Node node = make(Op::scale_rows, {x, s});
    node.value = TensorType(tx.shape());
    const int64_t rows = tx.extent(0);
    const int64_t stride = tx.size() / rows;
    for (int64_t i = 0; i < rows; ++i)
      for (int64_t j = 0; j < stride; ++j)
        node.value[i * stride + j] = tx[i * stride + j] * ts[i];
    return push(std::move(node));
  }

  /// Select rows along the leading axis, in the given order.
  NodeId gather_rows(NodeId x, std::vector<int64_t> indices) {
    const TensorType& tx = value(x);
    if (indices.empty()) throw ParameterError("gather_rows: empty index set");
    for (int64_t idx : indices)
      if (idx < 0 || idx >= tx.extent(0))
        throw ParameterError("gather_rows: index " + std::to_string(idx) +
                             " out of range [0, " + std::to_string(tx.extent(0)) + ")");
    Node node = make(Op::gather_rows, {x});
    Shape out_shape = tx.shape();
    out_shape[0] = static_cast<int64_t>(indices.size());
    node.value = TensorType(out_shape);
    const int64_t stride = tx.size() / tx.extent(0);
    for (size_t t = 0; t < indices.size(); ++t)
      for (int64_t j = 0; j < stride; ++j)
        node.value[static_cast<int64_t>(t) * stride + j] = tx[indices[t] * stride + j];
    node.indices = std::move(indices);
    return push(std::move(node));
  }

  /// Distribute rows of x into a zero tensor with `rows` leading extent;
  /// indices must be distinct.
  NodeId scatter_rows(NodeId x, std::vector<int64_t> indices, int64_t rows) {
    const TensorType& tx = value(x);
    if (static_cast<int64_t>(indices.size()) != tx.extent(0))
      throw DimensionError("scatter_rows: " + std::to_string(indices.size()) +
                           " indices for " + std::to_string(tx.extent(0)) + " rows");
    std::vector<bool> seen(static_cast<size_t>(rows), false);
    for (int64_t idx : indices) {
      if (idx < 0 || idx >= rows)
        throw ParameterError("scatter_rows: index " + std::to_string(idx) +
                             " out of range [0, " + std::to_string(rows) + ")");
      if (seen[static_cast<size_t>(idx)])
        throw ParameterError("scatter_rows: duplicate index " + std::to_string(idx));
      seen[static_cast<size_t>(idx)] = true;
    }
    Node node = make(Op::scatter_rows, {x});
    Shape out_shape = tx.shape();
    out_shape[0] = rows;
    node.value = TensorType(out_shape);
    const int64_t stride = tx.size() / tx.extent(0);
    for (size_t t = 0; t < indices.size(); ++t)
      for (int64_t j = 0; j < stride; ++j)
        node.value[indices[t] * stride + j] = tx[static_cast<int64_t>(t) * stride + j];
    node.indices = std::move(indices);
    return push(std::move(node));
  }

  /// Concatenate along the leading axis; trailing extents must agree.
  NodeId concat(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw ParameterError("concat: no inputs");
    Shape out_shape = value(parts[0]).shape();
    for (size_t i = 1; i < parts.size(); ++i) {
      const Shape& s = value(parts[i]).shape();
      if (s.size() != out_shape.size() ||
          !std::equal(s.begin() + 1, s.end(), out_shape.begin() + 1))
        throw DimensionError("concat: trailing extents differ: " + shape_str(out_shape) +
                             " vs " + shape_str(s));
      out_shape[0] += s[0];
    }
    Node node = make(Op::concat, parts);
    node.value = TensorType(out_shape);
    int64_t offset = 0;
    for (NodeId part : parts) {
      const TensorType& tp = value(part);
      std::copy(tp.raw(), tp.raw() + tp.size(), node.value.raw() + offset);
      offset += tp.size();
    }
    return push(std::move(node));
  }

  NodeId reshape(NodeId x, Shape shape) {
    const TensorType& tx = value(x);
    if (shape_size(shape) != tx.size())
      throw DimensionError("reshape: cannot view " + shape_str(tx.shape()) + " as " +
                           shape_str(shape));
    Node node = make(Op::reshape, {x});
    node.value = TensorType(shape, {tx.raw(), tx.raw() + tx.size()});
    node.reshape_to = std::move(shape);
    return push(std::move(node));
  }

  NodeId sum_all(NodeId x) {
    Node node = make(Op::sum_all, {x});
    const TensorType& tx = value(x);
    T s = T(0);
    for (int64_t i = 0; i < tx.size(); ++i) s += tx[i];
    node.value = TensorType::scalar(s);
    return push(std::move(node));
  }

  /// -log softmax(logits)[label] with max-shift stabilization; logits 1-D.
  NodeId softmax_cross_entropy(NodeId logits, int64_t label) {
    const TensorType& tl = value(logits);
    if (tl.rank() != 1)
      throw DimensionError("softmax_cross_entropy: logits must be 1-D, got " +
                           shape_str(tl.shape()));
    if (label < 0 || label >= tl.extent(0))
      throw ParameterError("softmax_cross_entropy: label " + std::to_string(label) +
                           " out of range [0, " + std::to_string(tl.extent(0)) + ")");
    Node node = make(Op::softmax_ce, {logits});
    node.label = label;
    T mx = tl[0];
    for (int64_t i = 1; i < tl.size(); ++i) mx = std::max(mx, tl[i]);
    T sum = T(0);
    for (int64_t i = 0; i < tl.size(); ++i) sum += std::exp(tl[i] - mx);
    node.value = TensorType::scalar(mx + std::log(sum) - tl[label]);
    return push(std::move(node));
  }

  const TensorType& value(NodeId id) const { return nodes_[check(id)].value; }
  bool requires_grad(NodeId id) const { return nodes_[check(id)].needs_grad; }
  int64_t node_count() const { return static_cast<int64_t>(nodes_.size()); }

  /// Reverse-mode sweep from a scalar node; fills gradients for every node on
  /// a differentiable path to it.
  void backward(NodeId loss) {
    const Node& top = nodes_[check(loss)];
    if (top.value.size() != 1)
      throw ParameterError("backward: seed node must be scalar, got " +
                           shape_str(top.value.shape()));
    grads_.assign(nodes_.size(), TensorType());
    if (!top.needs_grad) return;
    grads_[static_cast<size_t>(loss)] = TensorType::scalar(T(1));
    for (int64_t i = loss; i >= 0; --i) {
      const Node& node = nodes_[static_cast<size_t>(i)];
      if (!node.needs_grad || grads_[static_cast<size_t>(i)].size() == 0) continue;
      backward_node(node, grads_[static_cast<size_t>(i)]);
    }
  }

  /// Gradient of the last backward() seed w.r.t. this node; zeros if the node
  /// was not reached.
  TensorType grad(NodeId id) const {
    const Node& node = nodes_[check(id)];
    if (static_cast<size_t>(id) < grads_.size() &&
        grads_[static_cast<size_t>(id)].size() != 0)
      return grads_[static_cast<size_t>(id)];
    return TensorType(node.value.shape());
  }

  /// Re-executes every recorded primitive in order from the leaf values.
  void replay() {
    for (Node& node : nodes_) {
      if (node.op == Op::leaf) continue;
      node.value = recompute(node);
    }
  }

 private:
  struct Node {
    Op op = Op::leaf;
    std::vector<NodeId> inputs;
    TensorType value;
    bool needs_grad = false;
    Conv3dSpec conv{};
    std::vector<int64_t> indices;
    T mul = T(0);
    T off = T(0);
    int64_t label = -1;
    Shape reshape_to;
  };

  NodeId check(NodeId id) const {
    if (id < 0 || static_cast<size_t>(id) >= nodes_.size())
      throw ParameterError("invalid node id " + std::to_string(id));
    return id;
  }

  Node make(Op op, std::vector<NodeId> inputs) {
    Node node;
    node.op = op;
    for (NodeId in : inputs) node.needs_grad |= nodes_[check(in)].needs_grad;
    node.inputs = std::move(inputs);
    return node;
  }

  NodeId push(Node node) {
    nodes_.push_back(std::move(node));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  NodeId unary(Op op, NodeId x) {
    Node node = make(op, {x});
    node.value = eval_unary(op, value(x));
    return push(std::move(node));
  }

  NodeId binary(Op op, NodeId a, NodeId b) {
    const TensorType& ta = value(a);
    const TensorType& tb = value(b);
    if (!ta.same_shape(tb))
      throw DimensionError("elementwise: shape mismatch " + shape_str(ta.shape()) +
                           " vs " + shape_str(tb.shape()));
    Node node = make(op, {a, b});
    node.value = TensorType(ta.shape());
    if (op == Op::hadamard)
      for (int64_t i = 0; i < ta.size(); ++i) node.value[i] = ta[i] * tb[i];
    else
      for (int64_t i = 0; i < ta.size(); ++i) node.value[i] = ta[i] + tb[i];
    return push(std::move(node));
  }

  static TensorType eval_unary(Op op, const TensorType& tx) {
    TensorType out(tx.shape());
    switch (op) {
      case Op::sigmoid:
        for (int64_t i = 0; i < tx.size(); ++i) out[i] = detail::stable_sigmoid(tx[i]);
        break;
      case Op::tanh_fn:
        for (int64_t i = 0; i < tx.size(); ++i) out[i] = std::tanh(tx[i]);
        break;
      case Op::relu:
        for (int64_t i = 0; i < tx.size(); ++i) out[i] = tx[i] > T(0) ? tx[i] : T(0);
        break;
      default:
        throw StructureError("eval_unary: not a unary op");
    }
    return out;
  }

  static TensorType conv_forward(const TensorType& x, const TensorType& k,
                                 const Conv3dSpec& spec) {
    const auto ax_d = detail::conv_axis(x.extent(1), k.extent(2), spec.pad[0],
                                        spec.dilation[0], "depth");
    const auto ax_h = detail::conv_axis(x.extent(2), k.extent(3), spec.pad[1],
                                        spec.dilation[1], "height");
    const auto ax_w = detail::conv_axis(x.extent(3), k.extent(4), spec.pad[2],
                                        spec.dilation[2], "width");
    const int64_t co_n = k.extent(0), ci_n = k.extent(1);
    TensorType out({co_n, ax_d.out, ax_h.out, ax_w.out});
    for (int64_t co = 0; co < co_n; ++co)
      for (int64_t ci = 0; ci < ci_n; ++ci)
        for (int64_t zd = 0; zd < k.extent(2); ++zd) {
          int64_t od_lo, od_hi;
          detail::tap_range(ax_d, zd, od_lo, od_hi);
          for (int64_t zh = 0; zh < k.extent(3); ++zh) {
            int64_t oh_lo, oh_hi;
            detail::tap_range(ax_h, zh, oh_lo, oh_hi);
            for (int64_t zw = 0; zw < k.extent(4); ++zw) {
              int64_t ow_lo, ow_hi;
              detail::tap_range(ax_w, zw, ow_lo, ow_hi);
              const T kv = k.at(co, ci, zd, zh, zw);
              if (kv == T(0)) continue;
              const int64_t sd = zd * ax_d.dilation - ax_d.pad_lo;
              const int64_t sh = zh * ax_h.dilation - ax_h.pad_lo;
              const int64_t sw = zw * ax_w.dilation - ax_w.pad_lo;
              for (int64_t od = od_lo; od < od_hi; ++od)
                for (int64_t oh = oh_lo; oh < oh_hi; ++oh) {
                  const T* xrow = &x.at(ci, od + sd, oh + sh, ow_lo + sw);
                  T* orow = &out.at(co, od, oh, ow_lo);
                  for (int64_t t = 0; t < ow_hi - ow_lo; ++t) orow[t] += kv * xrow[t];
                }
            }
          }
        }
    return out;
  }

  // Accumulates input and kernel gradients in one pass over kernel taps.
  static void conv_backward(const TensorType& x, const TensorType& k,
                            const Conv3dSpec& spec, const TensorType& gout,
                            TensorType* gx, TensorType* gk) {
    const auto ax_d = detail::conv_axis(x.extent(1), k.extent(2), spec.pad[0],
                                        spec.dilation[0], "depth");
    const auto ax_h = detail::conv_axis(x.extent(2), k.extent(3), spec.pad[1],
                                        spec.dilation[1], "height");
    const auto ax_w = detail::conv_axis(x.extent(3), k.extent(4), spec.pad[2],
                                        spec.dilation[2], "width");
    for (int64_t co = 0; co < k.extent(0); ++co)
      for (int64_t ci = 0; ci < k.extent(1); ++ci)
        for (int64_t zd = 0; zd < k.extent(2); ++zd) {
          int64_t od_lo, od_hi;
          detail::tap_range(ax_d, zd, od_lo, od_hi);
          for (int64_t zh = 0; zh < k.extent(3); ++zh) {
            int64_t oh_lo, oh_hi;
            detail::tap_range(ax_h, zh, oh_lo, oh_hi);
            for (int64_t zw = 0; zw < k.extent(4); ++zw) {
              int64_t ow_lo, ow_hi;
              detail::tap_range(ax_w, zw, ow_lo, ow_hi);
              const int64_t sd = zd * ax_d.dilation - ax_d.pad_lo;
              const int64_t sh = zh * ax_h.dilation - ax_h.pad_lo;
              const int64_t sw = zw * ax_w.dilation - ax_w.pad_lo;
              const T kv = k.at(co, ci, zd, zh, zw);
              T kacc = T(0);
              for (int64_t od = od_lo; od < od_hi; ++od)
                for (int64_t oh = oh_lo; oh < oh_hi; ++oh) {
                  const T* grow = &gout.at(co, od, oh, ow_lo);
                  const T* xrow = &x.at(ci, od + sd, oh + sh, ow_lo + sw);
                  if (gx != nullptr) {
                    T* gxrow = &gx->at(ci, od + sd, oh + sh, ow_lo + sw);
                    for (int64_t t = 0; t < ow_hi - ow_lo; ++t) {
                      gxrow[t] += kv * grow[t];
                      kacc += xrow[t] * grow[t];
                    }
                  } else {
                    for (int64_t t = 0; t < ow_hi - ow_lo; ++t) kacc += xrow[t] * grow[t];
                  }
                }
              if (gk != nullptr) gk->at(co, ci, zd, zh, zw) += kacc;
            }
          }
        }
  }

  TensorType recompute(const Node& node) const {
    switch (node.op) {
      case Op::matmul: {
        const TensorType& a = value(node.inputs[0]);
        const TensorType& b = value(node.inputs[1]);
        TensorType out({a.extent(0), b.extent(1)});
        detail::mm_nn(a.raw(), b.raw(), out.raw(), a.extent(0), a.extent(1), b.extent(1));
        return out;
      }
      case Op::conv3d:
        return conv_forward(value(node.inputs[0]), value(node.inputs[1]), node.conv);
      case Op::sigmoid:
      case Op::tanh_fn:
      case Op::relu:
        return eval_unary(node.op, value(node.inputs[0]));
      case Op::hadamard:
      case Op::add: {
        const TensorType& a = value(node.inputs[0]);
        const TensorType& b = value(node.inputs[1]);
        TensorType out(a.shape());
        if (node.op == Op::hadamard)
          for (int64_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
        else
          for (int64_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
        return out;
      }
      case Op::scale_add: {
        const TensorType& a = value(node.inputs[0]);
        TensorType out(a.shape());
        for (int64_t i = 0; i < a.size(); ++i) out[i] = node.mul * a[i] + node.off;
        return out;
      }
      case Op::scale_rows: {
        const TensorType& a = value(node.inputs[0]);
        const TensorType& s = value(node.inputs[1]);
        TensorType out(a.shape());
        const int64_t stride = a.size() / a.extent(0);
        for (int64_t i = 0; i < a.extent(0); ++i)
          for (int64_t j = 0; j < stride; ++j)
            out[i * stride + j] = a[i * stride + j] * s[i];
        return out;
      }
      case Op::gather_rows: {
        const TensorType& a = value(node.inputs[0]);
        Shape out_shape = a.shape();
        out_shape[0] = static_cast<int64_t>(node.indices.size());
        TensorType out(out_shape);
        const int64_t stride = a.size() / a.extent(0);
        for (size_t t = 0; t < node.indices.size(); ++t)
          for (int64_t j = 0; j < stride; ++j)
            out[static_cast<int64_t>(t) * stride + j] = a[node.indices[t] * stride + j];
        return out;
      }
      case Op::scatter_rows: {
        const TensorType& a = value(node.inputs[0]);
        Shape out_shape = node.value.shape();
        TensorType out(out_shape);
        const int64_t stride = a.size() / a.extent(0);
        for (size_t t = 0; t < node.indices.size(); ++t)
          for (int64_t j = 0; j < stride; ++j)
            out[node.indices[t] * stride + j] = a[static_cast<int64_t>(t) * stride + j];
        return out;
      }
      case Op::concat: {
        TensorType out(node.value.shape());
        int64_t offset = 0;
        for (NodeId part : node.inputs) {
          const TensorType& tp = value(part);
          std::copy(tp.raw(), tp.raw() + tp.size(), out.raw() + offset);
          offset += tp.size();
        }
        return out;
      }
      case Op::reshape: {
        const TensorType& a = value(node.inputs[0]);
        return TensorType(node.reshape_to, {a.raw(), a.raw() + a.size()});
      }
      case Op::sum_all: {
        const TensorType& a = value(node.inputs[0]);
        T s = T(0);
        for (int64_t i = 0; i < a.size(); ++i) s += a[i];
        return TensorType::scalar(s);
      }
      case Op::softmax_ce: {
        const TensorType& a = value(node.inputs[0]);
        T mx = a[0];
        for (int64_t i = 1; i < a.size(); ++i) mx = std::max(mx, a[i]);
        T sum = T(0);
        for (int64_t i = 0; i < a.size(); ++i) sum += std::exp(a[i] - mx);
        return TensorType::scalar(mx + std::log(sum) - a[node.label]);
      }
      case Op::leaf:
        return node.value;
    }
    throw StructureError("recompute: unknown op");
  }

  TensorType& grad_buffer(NodeId id) {
    TensorType& g = grads_[static_cast<size_t>(id)];
    if (g.size() == 0) g = TensorType(nodes_[static_cast<size_t>(id)].value.shape());
    return g;
  }

  void backward_node(const Node& node, const TensorType& g) {
    switch (node.op) {
      case Op::leaf:
        return;
      case Op::matmul: {
        const NodeId a = node.inputs[0], b = node.inputs[1];
        const TensorType& ta = value(a);
        const TensorType& tb = value(b);
        const int64_t m = ta.extent(0), k = ta.extent(1), n = tb.extent(1);
        if (nodes_[static_cast<size_t>(a)].needs_grad)
          detail::mm_nt(g.raw(), tb.raw(), grad_buffer(a).raw(), m, n, k);
        if (nodes_[static_cast<size_t>(b)].needs_grad)
          detail::mm_tn(ta.raw(), g.raw(), grad_buffer(b).raw(), m, k, n);
        return;
      }
      case Op::conv3d: {
        const NodeId x = node.inputs[0], kid = node.inputs[1];
        const bool want_x = nodes_[static_cast<size_t>(x)].needs_grad;
        const bool want_k = nodes_[static_cast<size_t>(kid)].needs_grad;
        conv_backward(value(x), value(kid), node.conv, g,
                      want_x ? &grad_buffer(x) : nullptr,
                      want_k ? &grad_buffer(kid) : nullptr);
        return;
      }
      case Op::sigmoid: {
        TensorType& gx = grad_buffer(node.inputs[0]);
        for (int64_t i = 0; i < g.size(); ++i)
          gx[i] += g[i] * node.value[i] * (T(1) - node.value[i]);
        return;
      }
      case Op::tanh_fn: {
        TensorType& gx = grad_buffer(node.inputs[0]);
        for (int64_t i = 0; i < g.size(); ++i)
          gx[i] += g[i] * (T(1) - node.value[i] * node.value[i]);
        return;
      }
      case Op::relu: {
        const TensorType& tx = value(node.inputs[0]);
        TensorType& gx = grad_buffer(node.inputs[0]);
        for (int64_t i = 0; i < g.size(); ++i)
          if (tx[i] > T(0)) gx[i] += g[i];
        return;
      }
      case Op::hadamard: {
        const NodeId a = node.inputs[0], b = node.inputs[1];
        if (nodes_[static_cast<size_t>(a)].needs_grad) {
          const TensorType& tb = value(b);
          TensorType& ga = grad_buffer(a);
          for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * tb[i];
        }
        if (nodes_[static_cast<size_t>(b)].needs_grad) {
          const TensorType& ta = value(a);
          TensorType& gb = grad_buffer(b);
          for (int64_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ta[i];
        }
        return;
      }
      case Op::add: {
        for (NodeId in : node.inputs) {
          if (!nodes_[static_cast<size_t>(in)].needs_grad) continue;
          TensorType& gi = grad_buffer(in);
          for (int64_t i = 0; i < g.size(); ++i) gi[i] += g[i];
        }
        return;
      }
      case Op::scale_add: {
        TensorType& gx = grad_buffer(node.inputs[0]);
        for (int64_t i = 0; i < g.size(); ++i) gx[i] += node.mul * g[i];
        return;
      }
      case Op::scale_rows: {
        const NodeId x = node.inputs[0], s = node.inputs[1];
        const TensorType& tx = value(x);
        const TensorType& ts = value(s);
        const int64_t rows = tx.extent(0);
        const int64_t stride = tx.size() / rows;
        if (nodes_[static_cast<size_t>(x)].needs_grad) {
          TensorType& gx = grad_buffer(x);
          for (int64_t i = 0; i < rows; ++i)
            for (int64_t j = 0; j < stride; ++j)
              gx[i * stride + j] += g[i * stride + j] * ts[i];
        }
        if (nodes_[static_cast<size_t>(s)].needs_grad) {
          TensorType& gs = grad_buffer(s);
          for (int64_t i = 0; i < rows; ++i) {
            T acc = T(0);
            for (int64_t j = 0; j < stride; ++j)
              acc += g[i * stride + j] * tx[i * stride + j];
            gs[i] += acc;
          }
        }
        return;
      }
      case Op::gather_rows: {
        TensorType& gx = grad_buffer(node.inputs[0]);
        const int64_t stride = gx.size() / gx.extent(0);
        for (size_t t = 0; t < node.indices.size(); ++t)
          for (int64_t j = 0; j < stride; ++j)
            gx[node.indices[t] * stride + j] += g[static_cast<int64_t>(t) * stride + j];
        return;
      }
      case Op::scatter_rows: {
        TensorType& gx = grad_buffer(node.inputs[0]);
        const int64_t stride = gx.size() / gx.extent(0);
        for (size_t t = 0; t < node.indices.size(); ++t)
          for (int64_t j = 0; j < stride; ++j)
            gx[static_cast<int64_t>(t) * stride + j] += g[node.indices[t] * stride + j];
        return;
      }
      case Op::concat: {
        int64_t offset = 0;
        for (NodeId in : node.inputs) {
          const int64_t len = value(in).size();
          if (nodes_[static_cast<size_t>(in)].needs_grad) {
            TensorType& gi = grad_buffer(in);
            for (int64_t i = 0; i < len; ++i) gi[i] += g[offset + i];
          }
          offset += len;
        }
        return;
      }
      case Op::reshape: {
        TensorType& gx = grad_buffer(node.inputs[0]);
        for (int64_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        return;
      }
      case Op::sum_all: {
        TensorType& gx = grad_buffer(node.inputs[0]);
        for (int64_t i = 0; i < gx.size(); ++i) gx[i] += g[0];
        return;
      }
      case Op::softmax_ce: {
        const TensorType& tl = value(node.inputs[0]);
        TensorType& gx = grad_buffer(node.inputs[0]);
        T mx = tl[0];
        for (int64_t i = 1; i < tl.size(); ++i) mx = std::max(mx, tl[i]);
        T sum = T(0);
        for (int64_t i = 0; i < tl.size(); ++i) sum += std::exp(tl[i] - mx);
        for (int64_t i = 0; i < tl.size(); ++i) {
          const T p = std::exp(tl[i] - mx) / sum;
          gx[i] += g[0] * (p - (i == node.label ? T(1) : T(0)));
        }
        return;
      }
    }
    throw StructureError("backward: unknown op");
  }

  // Deque keeps value() references stable while later primitives are
  // recorded.
  std::deque<Node> nodes_;
  std::vector<TensorType> grads_;
};

using GraphF = Graph<float>;
using GraphD = Graph<double>;

}  // namespace sgr
