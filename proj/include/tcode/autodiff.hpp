#pragma once

// Reverse-mode automatic differentiation over a dynamically recorded tape.
//
// A Tape owns every intermediate value of one computation. Nodes are appended
// in evaluation order, so reverse insertion order is a valid topological order
// for the backward sweep. Only scalar losses are differentiated.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "tcode/errors.hpp"
#include "tcode/tensor.hpp"

namespace tcode {

class Tape;

/// Handle to a node on a Tape.
class Var {
public:
  Var() = default;
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }

private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
public:
  /// Called during the backward sweep with the id of the node being processed.
  using Backward = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value) { return push(std::move(value), {}, nullptr, false, nullptr); }
  Var variable(Tensor value) { return push(std::move(value), {}, nullptr, true, nullptr); }

  /// Leaf bound to an external tensor; backward() accumulates into `param.grad()`.
  Var parameter(Tensor& param) { return push(Tensor{}, {}, nullptr, true, &param); }

  /// Appends a node computed from `inputs`. `backward` runs only if some input needs a gradient.
  Var record(Tensor value, const std::vector<Var>& inputs, Backward backward) {
    std::vector<std::size_t> ids;
    bool needs = false;
    ids.reserve(inputs.size());
    for (const Var& v : inputs) {
      check_owner(v);
      ids.push_back(v.id());
      needs = needs || nodes_[v.id()].requires_grad;
    }
    return push(std::move(value), std::move(ids), needs ? std::move(backward) : Backward{}, needs, nullptr);
  }

  const Tensor& value(Var v) const {
    check_owner(v);
    return value(v.id());
  }
  const Tensor& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.value;
  }

  bool requires_grad(Var v) const { return nodes_.at(v.id()).requires_grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }

  /// Gradient flowing into node `id`; empty span if nothing reached it.
  std::span<const double> grad(std::size_t id) const { return nodes_[id].grad; }
  std::span<const double> grad(Var v) const {
    check_owner(v);
    return grad(v.id());
  }

  /// Mutable gradient accumulator for node `id`, zero-initialized on first use.
  std::span<double> grad_accumulator(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad.assign(value(id).size(), 0.0);
    return n.grad;
  }

  /// Runs the backward sweep from a scalar node.
  void backward(Var loss) {
    check_owner(loss);
    if (value(loss).size() != 1) {
      throw ContractViolation("backward requires a scalar loss, got shape " + to_string(value(loss).shape()));
    }
    for (Node& n : nodes_) n.grad.clear();
    grad_accumulator(loss.id())[0] = 1.0;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.empty() || !n.requires_grad) continue;
      if (n.backward) n.backward(*this, i);
      if (n.external) {
        auto g = n.external->grad();
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad[k];
      }
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

private:
  struct Node {
    Tensor value;
    Tensor* external = nullptr;
    std::vector<std::size_t> inputs;
    Backward backward;
    bool requires_grad = false;
    Buffer grad;
  };

  Var push(Tensor value, std::vector<std::size_t> inputs, Backward backward, bool requires_grad,
           Tensor* external) {
    nodes_.push_back(Node{std::move(value), external, std::move(inputs), std::move(backward), requires_grad, {}});
    return Var(this, nodes_.size() - 1);
  }

  void check_owner(Var v) const {
    if (v.tape_ != this || v.id_ >= nodes_.size()) throw ContractViolation("variable does not belong to this tape");
  }

  std::deque<Node> nodes_;  // stable references across push_back
};

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

inline ConstMap as_matrix(std::span<const double> d, std::size_t rows, std::size_t cols) {
  return ConstMap(d.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
inline MutMap as_matrix(std::span<double> d, std::size_t rows, std::size_t cols) {
  return MutMap(d.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

inline void accumulate(std::span<double> dst, std::span<const double> src, double scale = 1.0) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Differentiable operations
// ---------------------------------------------------------------------------

/// [m x k] * [k x n] -> [m x n]
inline Var matmul(Var a, Var b) {
  Tape& tape = a.tape();
  const Tensor& A = tape.value(a);
  const Tensor& B = tape.value(b);
  require_rank(A, 2, "matmul lhs");
  require_rank(B, 2, "matmul rhs");
  const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
  if (B.dim(0) != k) throw DimensionError("matmul: " + to_string(A.shape()) + " x " + to_string(B.shape()));
  Tensor out(Shape{m, n});
  detail::as_matrix(out.data(), m, n).noalias() = detail::as_matrix(A.data(), m, k) * detail::as_matrix(B.data(), k, n);
  return tape.record(std::move(out), {a, b}, [m, k, n](Tape& t, std::size_t self) {
    const auto& in = t.inputs(self);
    auto g = detail::as_matrix(t.grad(self), m, n);
    if (t.requires_grad(in[0])) {
      detail::as_matrix(t.grad_accumulator(in[0]), m, k).noalias() +=
          g * detail::as_matrix(t.value(in[1]).data(), k, n).transpose();
    }
    if (t.requires_grad(in[1])) {
      detail::as_matrix(t.grad_accumulator(in[1]), k, n).noalias() +=
          detail::as_matrix(t.value(in[0]).data(), m, k).transpose() * g;
    }
  });
}

/// Affine layer: x[m x k] * w[k x n] + bias[n] broadcast over rows.
inline Var linear(Var x, Var w, Var bias) {
  Tape& tape = x.tape();
  const Tensor& X = tape.value(x);
  const Tensor& W = tape.value(w);
  const Tensor& b = tape.value(bias);
  require_rank(X, 2, "linear input");
  require_rank(W, 2, "linear weight");
  const std::size_t m = X.dim(0), k = X.dim(1), n = W.dim(1);
  if (W.dim(0) != k) {
    throw DimensionError("linear: input " + to_string(X.shape()) + " incompatible with weight " + to_string(W.shape()));
  }
  require_shape(b, Shape{n}, "linear bias");
  Tensor out(Shape{m, n});
  auto O = detail::as_matrix(out.data(), m, n);
  O.noalias() = detail::as_matrix(X.data(), m, k) * detail::as_matrix(W.data(), k, n);
  O.rowwise() += detail::as_matrix(b.data(), 1, n).row(0);
  return tape.record(std::move(out), {x, w, bias}, [m, k, n](Tape& t, std::size_t self) {
    const auto& in = t.inputs(self);
    auto g = detail::as_matrix(t.grad(self), m, n);
    if (t.requires_grad(in[0])) {
      detail::as_matrix(t.grad_accumulator(in[0]), m, k).noalias() +=
          g * detail::as_matrix(t.value(in[1]).data(), k, n).transpose();
    }
    if (t.requires_grad(in[1])) {
      detail::as_matrix(t.grad_accumulator(in[1]), k, n).noalias() +=
          detail::as_matrix(t.value(in[0]).data(), m, k).transpose() * g;
    }
    if (t.requires_grad(in[2])) {
      detail::as_matrix(t.grad_accumulator(in[2]), 1, n).row(0) += g.colwise().sum();
    }
  });
}

inline Var relu(Var x) {
  Tape& tape = x.tape();
  Tensor out = tape.value(x);
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return tape.record(std::move(out), {x}, [](Tape& t, std::size_t self) {
    const std::size_t in = t.inputs(self)[0];
    auto xin = t.value(in).data();
    auto g = t.grad(self);
    auto dst = t.grad_accumulator(in);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += xin[i] > 0.0 ? g[i] : 0.0;
  });
}

/// ELU with alpha = 1: x for x > 0, exp(x) - 1 otherwise.
inline Var elu(Var x) {
  Tape& tape = x.tape();
  Tensor out = tape.value(x);
  for (double& v : out.data()) v = v > 0.0 ? v : std::expm1(v);
  return tape.record(std::move(out), {x}, [](Tape& t, std::size_t self) {
    const std::size_t in = t.inputs(self)[0];
    auto xin = t.value(in).data();
    auto g = t.grad(self);
    auto dst = t.grad_accumulator(in);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += xin[i] > 0.0 ? g[i] : g[i] * std::exp(xin[i]);
  });
}

inline Var add(Var a, Var b) {
  Tape& tape = a.tape();
  const Tensor& A = tape.value(a);
  const Tensor& B = tape.value(b);
  if (A.shape() != B.shape()) throw DimensionError("add: " + to_string(A.shape()) + " vs " + to_string(B.shape()));
  Tensor out = A;
  detail::accumulate(out.data(), B.data());
  return tape.record(std::move(out), {a, b}, [](Tape& t, std::size_t self) {
    for (std::size_t in : t.inputs(self)) {
      if (t.requires_grad(in)) detail::accumulate(t.grad_accumulator(in), t.grad(self));
    }
  });
}

inline Var scale(Var a, double c) {
  Tape& tape = a.tape();
  Tensor out = tape.value(a);
  for (double& v : out.data()) v *= c;
  return tape.record(std::move(out), {a}, [c](Tape& t, std::size_t self) {
    detail::accumulate(t.grad_accumulator(t.inputs(self)[0]), t.grad(self), c);
  });
}

/// Sum of all elements -> scalar.
inline Var sum(Var a) {
  Tape& tape = a.tape();
  const auto d = tape.value(a).data();
  double s = 0.0;
  for (double v : d) s += v;
  return tape.record(Tensor::scalar(s), {a}, [](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    for (double& v : t.grad_accumulator(t.inputs(self)[0])) v += g;
  });
}

/// Σ a_i^2 -> scalar.
inline Var squared_norm(Var a) {
  Tape& tape = a.tape();
  double s = 0.0;
  for (double v : tape.value(a).data()) s += v * v;
  return tape.record(Tensor::scalar(s), {a}, [](Tape& t, std::size_t self) {
    const std::size_t in = t.inputs(self)[0];
    detail::accumulate(t.grad_accumulator(in), t.value(in).data(), 2.0 * t.grad(self)[0]);
  });
}

inline Var reshape(Var a, Shape shape) {
  Tape& tape = a.tape();
  Tensor out = tape.value(a).reshaped(std::move(shape));
  return tape.record(std::move(out), {a}, [](Tape& t, std::size_t self) {
    detail::accumulate(t.grad_accumulator(t.inputs(self)[0]), t.grad(self));
  });
}

/// Slice [begin, end) along the leading axis.
inline Var slice_leading(Var a, std::size_t begin, std::size_t end) {
  Tape& tape = a.tape();
  const Tensor& A = tape.value(a);
  if (A.rank() == 0 || begin > end || end > A.dim(0)) {
    throw DimensionError("slice_leading: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of bounds for " + to_string(A.shape()));
  }
  const std::size_t stride = A.size() / A.dim(0);
  Shape shape = A.shape();
  shape[0] = end - begin;
  std::vector<double> data(A.data().begin() + static_cast<std::ptrdiff_t>(begin * stride),
                           A.data().begin() + static_cast<std::ptrdiff_t>(end * stride));
  Tensor out(std::move(shape), std::move(data));
  return tape.record(std::move(out), {a}, [begin, stride](Tape& t, std::size_t self) {
    auto dst = t.grad_accumulator(t.inputs(self)[0]).subspan(begin * stride);
    detail::accumulate(dst.first(t.grad(self).size()), t.grad(self));
  });
}

/// Slice [begin, end) along the trailing axis.
inline Var slice_trailing(Var a, std::size_t begin, std::size_t end) {
  Tape& tape = a.tape();
  const Tensor& A = tape.value(a);
  const std::size_t width = A.shape().back();
  if (begin > end || end > width) {
    throw DimensionError("slice_trailing: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of bounds for " + to_string(A.shape()));
  }
  const std::size_t rows = A.size() / width, w = end - begin;
  Shape shape = A.shape();
  shape.back() = w;
  Tensor out(std::move(shape));
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(A.data().begin() + static_cast<std::ptrdiff_t>(r * width + begin), w,
                out.data().begin() + static_cast<std::ptrdiff_t>(r * w));
  }
  return tape.record(std::move(out), {a}, [rows, width, begin, w](Tape& t, std::size_t self) {
    auto dst = t.grad_accumulator(t.inputs(self)[0]);
    auto g = t.grad(self);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < w; ++c) dst[r * width + begin + c] += g[r * w + c];
    }
  });
}

/// Scalar node with precomputed local gradients d(value)/d(input_i).
/// Used by the fused loss kernels, which produce value and gradient in one pass.
inline Var fused_scalar(const std::vector<Var>& inputs, double value, std::vector<Tensor> local_grads) {
  if (inputs.empty()) throw ContractViolation("fused_scalar needs at least one input");
  Tape& tape = inputs.front().tape();
  return tape.record(Tensor::scalar(value), inputs, [local = std::move(local_grads)](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    const auto& in = t.inputs(self);
    for (std::size_t i = 0; i < in.size(); ++i) {
      if (t.requires_grad(in[i])) detail::accumulate(t.grad_accumulator(in[i]), local[i].data(), g);
    }
  });
}

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator*(double c, Var a) { return scale(a, c); }

}  // namespace tcode
