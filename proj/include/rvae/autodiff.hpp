#pragma once

// Tape-based reverse-mode differentiation over dense double tensors.
//
// A Graph owns every value computed through it. Var is a lightweight handle
// (graph pointer + node index); ops append nodes in evaluation order, so the
// tape is topologically sorted by construction and backward() is a single
// reverse sweep.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "rvae/errors.hpp"
#include "rvae/tensor.hpp"

namespace rvae {

enum class OpKind {
  Leaf,
  MatMul,
  Add,
  AddRow,
  Sub,
  Mul,
  Exp,
  Log,
  PowScalar,
  Sigmoid,
  Relu,
  Neg,
  Scale,
  Clamp,
  Sum,
  SumAxis,
  ProdAxis,
};

inline const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Leaf: return "leaf";
    case OpKind::MatMul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::AddRow: return "add_row";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::PowScalar: return "pow_scalar";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Relu: return "relu";
    case OpKind::Neg: return "neg";
    case OpKind::Scale: return "scale";
    case OpKind::Clamp: return "clamp";
    case OpKind::Sum: return "sum";
    case OpKind::SumAxis: return "sum_axis";
    case OpKind::ProdAxis: return "prod_axis";
  }
  return "?";
}

/// Lower bound applied to arguments of log.
inline constexpr double kLogFloor = 1e-12;

class Graph;

class Var {
 public:
  Var() = default;

  Graph& graph() const { return *graph_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return graph_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Graph;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Trainable leaf; receives a gradient in backward().
  Var parameter(Tensor t) { return push_leaf(std::move(t), true); }
  /// Non-trainable leaf.
  Var constant(Tensor t) { return push_leaf(std::move(t), false); }
  Var constant(Shape shape, double fill) {
    return constant(Tensor::filled(std::move(shape), fill));
  }

  const Tensor& value(Var v) const { return node(v).value; }

  /// d(loss)/d(v) from the last backward() call. Zero for values the loss
  /// does not depend on.
  Tensor grad(Var v) const;

  std::size_t size() const noexcept { return nodes_.size(); }

  /// Reverse sweep from a scalar loss. Earlier gradients are discarded.
  void backward(Var loss);

  /// Appends an op node. Used by the free op functions below.
  Var record(OpKind kind, Tensor value, std::vector<std::size_t> inputs,
             double arg = 0.0, double arg2 = 0.0, std::size_t axis = 0);

 private:
  struct Node {
    OpKind kind = OpKind::Leaf;
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    double arg = 0.0;
    double arg2 = 0.0;
    std::size_t axis = 0;
    bool trainable = false;
    bool needs_grad = false;
  };

  Var push_leaf(Tensor t, bool trainable) {
    Node n;
    n.value = std::move(t);
    n.trainable = trainable;
    n.needs_grad = trainable;
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
  }

  const Node& node(Var v) const {
    if (v.graph_ != this || v.id_ >= nodes_.size()) {
      throw std::invalid_argument("Var does not belong to this graph");
    }
    return nodes_[v.id_];
  }

  void propagate(std::size_t id);

  std::vector<Node> nodes_;
  bool have_grads_ = false;
};

inline const Tensor& Var::value() const { return graph_->value(*this); }

namespace detail {

inline void require_same_graph(Var a, Var b, const char* op) {
  if (&a.graph() != &b.graph()) {
    throw std::invalid_argument(std::string(op) + ": operands from different graphs");
  }
}

inline void require_same_shape(Var a, Var b, const char* op) {
  require_same_graph(a, b, op);
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

// Splits a shape around `axis` into (outer, length, inner) extents.
struct AxisLayout {
  std::size_t outer = 1, length = 1, inner = 1;
};

inline AxisLayout axis_layout(const Shape& shape, std::size_t axis) {
  AxisLayout l;
  for (std::size_t i = 0; i < axis; ++i) l.outer *= shape[i];
  l.length = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) l.inner *= shape[i];
  return l;
}

template <typename F>
Tensor map_values(const Tensor& in, F f) {
  Tensor out = in;
  for (double& v : out.data()) v = f(v);
  return out;
}

template <typename F>
Tensor zip_values(const Tensor& a, const Tensor& b, F f) {
  Tensor out = a;
  auto o = out.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(o[i], bv[i]);
  return out;
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

inline Var Graph::record(OpKind kind, Tensor value, std::vector<std::size_t> inputs,
                         double arg, double arg2, std::size_t axis) {
  if (!value.all_finite()) {
    throw NonFiniteError(op_name(kind), std::string("non-finite output from ") +
                                            op_name(kind));
  }
  Node n;
  n.kind = kind;
  n.value = std::move(value);
  n.arg = arg;
  n.arg2 = arg2;
  n.axis = axis;
  for (std::size_t in : inputs) n.needs_grad = n.needs_grad || nodes_[in].needs_grad;
  n.inputs = std::move(inputs);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

inline Tensor Graph::grad(Var v) const {
  const Node& n = node(v);
  if (!have_grads_ || !n.needs_grad) return Tensor::zeros(n.value.shape());
  return n.grad;
}

inline void Graph::backward(Var loss) {
  const Node& root = node(loss);
  if (root.value.size() != 1) {
    throw DimensionError("backward: loss must be scalar, got shape " +
                         shape_str(root.value.shape()));
  }
  for (Node& n : nodes_) {
    if (n.needs_grad) n.grad = Tensor::zeros(n.value.shape());
  }
  have_grads_ = true;
  if (!root.needs_grad) return;
  nodes_[loss.id()].grad[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    if (nodes_[i].needs_grad && nodes_[i].kind != OpKind::Leaf) propagate(i);
  }
}

inline void Graph::propagate(std::size_t id) {
  Node& n = nodes_[id];
  const auto g = n.grad.data();
  const auto out = n.value.data();

  auto input = [&](std::size_t k) -> Node& { return nodes_[n.inputs[k]]; };
  auto accumulate_unary = [&](auto local) {
    Node& a = input(0);
    if (!a.needs_grad) return;
    auto x = a.value.data();
    auto ga = a.grad.data();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * local(x[i], out[i]);
  };

  switch (n.kind) {
    case OpKind::Leaf:
      break;
    case OpKind::MatMul: {
      Node& a = input(0);
      Node& b = input(1);
      const std::size_t m = a.value.dim(0), k = a.value.dim(1), cols = b.value.dim(1);
      auto av = a.value.data();
      auto bv = b.value.data();
      if (a.needs_grad) {
        // dA = dC * B^T
        auto ga = a.grad.data();
        for (std::size_t i = 0; i < m; ++i) {
          const double* gi = &g[i * cols];
          for (std::size_t p = 0; p < k; ++p) {
            const double* bp = &bv[p * cols];
            double s = 0.0;
            for (std::size_t j = 0; j < cols; ++j) s += gi[j] * bp[j];
            ga[i * k + p] += s;
          }
        }
      }
      if (b.needs_grad) {
        // dB = A^T * dC
        auto gb = b.grad.data();
        for (std::size_t i = 0; i < m; ++i) {
          const double* gi = &g[i * cols];
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            if (aip == 0.0) continue;
            double* gbp = &gb[p * cols];
            for (std::size_t j = 0; j < cols; ++j) gbp[j] += aip * gi[j];
          }
        }
      }
      break;
    }
    case OpKind::Add:
    case OpKind::Sub: {
      const double sign = n.kind == OpKind::Add ? 1.0 : -1.0;
      Node& a = input(0);
      Node& b = input(1);
      if (a.needs_grad) {
        auto ga = a.grad.data();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
      }
      if (b.needs_grad) {
        auto gb = b.grad.data();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += sign * g[i];
      }
      break;
    }
    case OpKind::AddRow: {
      Node& a = input(0);
      Node& bias = input(1);
      if (a.needs_grad) {
        auto ga = a.grad.data();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
      }
      if (bias.needs_grad) {
        auto gb = bias.grad.data();
        const std::size_t cols = gb.size();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i % cols] += g[i];
      }
      break;
    }
    case OpKind::Mul: {
      Node& a = input(0);
      Node& b = input(1);
      auto av = a.value.data();
      auto bv = b.value.data();
      if (a.needs_grad) {
        auto ga = a.grad.data();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bv[i];
      }
      if (b.needs_grad) {
        auto gb = b.grad.data();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * av[i];
      }
      break;
    }
    case OpKind::Exp:
      accumulate_unary([](double, double y) { return y; });
      break;
    case OpKind::Log:
      accumulate_unary([](double x, double) { return x > kLogFloor ? 1.0 / x : 0.0; });
      break;
    case OpKind::PowScalar: {
      const double c = n.arg;
      accumulate_unary([c](double x, double) { return c * std::pow(x, c - 1.0); });
      break;
    }
    case OpKind::Sigmoid:
      accumulate_unary([](double, double y) { return y * (1.0 - y); });
      break;
    case OpKind::Relu:
      accumulate_unary([](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
      break;
    case OpKind::Neg:
      accumulate_unary([](double, double) { return -1.0; });
      break;
    case OpKind::Scale: {
      const double c = n.arg;
      accumulate_unary([c](double, double) { return c; });
      break;
    }
    case OpKind::Clamp: {
      const double lo = n.arg, hi = n.arg2;
      accumulate_unary([lo, hi](double x, double) { return x >= lo && x <= hi ? 1.0 : 0.0; });
      break;
    }
    case OpKind::Sum: {
      Node& a = input(0);
      if (a.needs_grad) {
        for (double& v : a.grad.data()) v += g[0];
      }
      break;
    }
    case OpKind::SumAxis:
    case OpKind::ProdAxis: {
      Node& a = input(0);
      if (!a.needs_grad) break;
      const auto l = detail::axis_layout(a.value.shape(), n.axis);
      auto x = a.value.data();
      auto ga = a.grad.data();
      std::vector<double> prefix(l.length + 1), suffix(l.length + 1);
      for (std::size_t o = 0; o < l.outer; ++o) {
        for (std::size_t in = 0; in < l.inner; ++in) {
          const double go = g[o * l.inner + in];
          auto at = [&](std::size_t k) { return (o * l.length + k) * l.inner + in; };
          if (n.kind == OpKind::SumAxis) {
            for (std::size_t k = 0; k < l.length; ++k) ga[at(k)] += go;
            continue;
          }
          // Product of all factors except k, without dividing by x[k].
          prefix[0] = 1.0;
          for (std::size_t k = 0; k < l.length; ++k) prefix[k + 1] = prefix[k] * x[at(k)];
          suffix[l.length] = 1.0;
          for (std::size_t k = l.length; k-- > 0;) suffix[k] = suffix[k + 1] * x[at(k)];
          for (std::size_t k = 0; k < l.length; ++k) {
            ga[at(k)] += go * prefix[k] * suffix[k + 1];
          }
        }
      }
      break;
    }
  }
}

// ---------------------------------------------------------------------------
// Ops

inline Var matmul(Var a, Var b) {
  detail::require_same_graph(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw DimensionError("matmul: " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out = Tensor::zeros({m, n});
  auto o = out.data();
  auto x = av.data();
  auto y = bv.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* oi = &o[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const double xip = x[i * k + p];
      if (xip == 0.0) continue;
      const double* yp = &y[p * n];
      for (std::size_t j = 0; j < n; ++j) oi[j] += xip * yp[j];
    }
  }
  return a.graph().record(OpKind::MatMul, std::move(out), {a.id(), b.id()});
}

inline Var add(Var a, Var b) {
  detail::require_same_shape(a, b, "add");
  return a.graph().record(OpKind::Add,
                          detail::zip_values(a.value(), b.value(), std::plus<>()),
                          {a.id(), b.id()});
}

/// a[m x n] + bias[n], the bias repeated for every row.
inline Var add_row(Var a, Var bias) {
  detail::require_same_graph(a, bias, "add_row");
  const Tensor& av = a.value();
  const Tensor& bv = bias.value();
  if (av.rank() != 2 || bv.rank() != 1 || av.dim(1) != bv.dim(0)) {
    throw DimensionError("add_row: " + shape_str(av.shape()) + " + " + shape_str(bv.shape()));
  }
  Tensor out = av;
  auto o = out.data();
  const std::size_t cols = bv.size();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i % cols];
  return a.graph().record(OpKind::AddRow, std::move(out), {a.id(), bias.id()});
}

inline Var sub(Var a, Var b) {
  detail::require_same_shape(a, b, "sub");
  return a.graph().record(OpKind::Sub,
                          detail::zip_values(a.value(), b.value(), std::minus<>()),
                          {a.id(), b.id()});
}

inline Var mul(Var a, Var b) {
  detail::require_same_shape(a, b, "mul");
  return a.graph().record(OpKind::Mul,
                          detail::zip_values(a.value(), b.value(), std::multiplies<>()),
                          {a.id(), b.id()});
}

inline Var exp(Var a) {
  return a.graph().record(OpKind::Exp,
                          detail::map_values(a.value(), [](double v) { return std::exp(v); }),
                          {a.id()});
}

/// Natural log with the argument floored at kLogFloor.
inline Var log(Var a) {
  return a.graph().record(
      OpKind::Log,
      detail::map_values(a.value(), [](double v) { return std::log(std::max(v, kLogFloor)); }),
      {a.id()});
}

inline Var pow_scalar(Var a, double c) {
  return a.graph().record(
      OpKind::PowScalar,
      detail::map_values(a.value(), [c](double v) { return std::pow(v, c); }), {a.id()}, c);
}

inline Var sigmoid(Var a) {
  return a.graph().record(OpKind::Sigmoid, detail::map_values(a.value(), detail::sigmoid),
                          {a.id()});
}

inline Var relu(Var a) {
  return a.graph().record(
      OpKind::Relu, detail::map_values(a.value(), [](double v) { return v > 0.0 ? v : 0.0; }),
      {a.id()});
}

inline Var neg(Var a) {
  return a.graph().record(OpKind::Neg,
                          detail::map_values(a.value(), [](double v) { return -v; }),
                          {a.id()});
}

inline Var scale(Var a, double c) {
  return a.graph().record(
      OpKind::Scale, detail::map_values(a.value(), [c](double v) { return c * v; }), {a.id()},
      c);
}

/// Elementwise clamp to [lo, hi]; gradient passes only inside the interval.
inline Var clamp(Var a, double lo, double hi) {
  return a.graph().record(
      OpKind::Clamp,
      detail::map_values(a.value(), [lo, hi](double v) { return std::clamp(v, lo, hi); }),
      {a.id()}, lo, hi);
}

inline Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.graph().record(OpKind::Sum, Tensor::scalar(s), {a.id()});
}

namespace detail {

template <typename Combine>
Tensor reduce_axis(const Tensor& in, std::size_t axis, double init, Combine f,
                   const char* op) {
  if (axis >= in.rank()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for rank " + std::to_string(in.rank()));
  }
  Shape out_shape = in.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  const auto l = axis_layout(in.shape(), axis);
  Tensor out = Tensor::filled(out_shape, init);
  auto o = out.data();
  auto x = in.data();
  for (std::size_t i = 0; i < l.outer; ++i) {
    for (std::size_t k = 0; k < l.length; ++k) {
      for (std::size_t j = 0; j < l.inner; ++j) {
        double& dst = o[i * l.inner + j];
        dst = f(dst, x[(i * l.length + k) * l.inner + j]);
      }
    }
  }
  return out;
}

}  // namespace detail

/// Sum over one axis; the axis is removed from the shape.
inline Var sum_axis(Var a, std::size_t axis) {
  auto out = detail::reduce_axis(a.value(), axis, 0.0, std::plus<>(), "sum_axis");
  return a.graph().record(OpKind::SumAxis, std::move(out), {a.id()}, 0.0, 0.0, axis);
}

/// Product over one axis; the axis is removed from the shape.
inline Var prod_axis(Var a, std::size_t axis) {
  auto out = detail::reduce_axis(a.value(), axis, 1.0, std::multiplies<>(), "prod_axis");
  return a.graph().record(OpKind::ProdAxis, std::move(out), {a.id()}, 0.0, 0.0, axis);
}

/// Constant of the same shape as `like`, filled with `value`.
inline Var constant_like(Var like, double value) {
  return like.graph().constant(like.shape(), value);
}

}  // namespace rvae
