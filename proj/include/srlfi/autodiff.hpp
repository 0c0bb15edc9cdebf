#pragma once

// Define-by-run reverse-mode differentiation over dense tensors.
//
// A Tape records every operation applied to its Vars in execution order,
// so parents always precede children. backward() walks the records once in
// reverse and accumulates adjoints into the leaves marked as requiring
// gradients. Tapes are single-owner and meant to be rebuilt for every
// forward pass.

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "srlfi/tensor.hpp"

namespace srlfi::ad {

enum class OpKind {
  leaf,
  matmul,
  add,
  subtract,
  multiply,
  power,
  exp,
  log,
  tanh,
  sigmoid,
  relu,
  leaky_relu,
  sum,
  mean,
  concat,
  broadcast,
  pairwise_sqdist,
  scale,
  select_columns,
  slice_rows,
  clamp,
};

std::string_view op_name(OpKind kind);

using NodeId = std::size_t;

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  NodeId id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }

private:
  friend class Tape;
  Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

/// Gradients of a scalar root with respect to gradient-requiring leaves.
class GradientMap {
public:
  bool contains(Var leaf) const { return grads_.contains(leaf.id()); }
  const Tensor& at(Var leaf) const;
  std::size_t size() const noexcept { return grads_.size(); }

private:
  friend class Tape;
  std::unordered_map<NodeId, Tensor> grads_;
};

struct BackwardArgs {
  const Tape& tape;
  NodeId self;
  const Tensor& upstream;
  // One slot per parent; null when that parent does not need a gradient.
  std::span<Tensor* const> parent_grads;
};

using BackwardFn = std::function<void(const BackwardArgs&)>;

class Tape {
public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad);
  Var constant(Tensor value) { return leaf(std::move(value), false); }
  Var variable(Tensor value) { return leaf(std::move(value), true); }

  /// Reverse sweep from a scalar root. Every gradient-requiring leaf gets an
  /// entry; leaves the root does not depend on get zeros.
  GradientMap backward(Var root) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  OpKind kind(NodeId id) const { return nodes_.at(id).kind; }
  const std::vector<NodeId>& parents(NodeId id) const { return nodes_.at(id).parents; }
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }

  /// Appends an operation node. `requires_grad` is inherited from parents.
  Var record(OpKind kind, Tensor value, std::vector<NodeId> parents, BackwardFn backward);

private:
  struct Node {
    OpKind kind;
    Tensor value;
    std::vector<NodeId> parents;
    bool requires_grad;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

// Operations. All operands must live on the same tape.
//
// add/subtract/multiply broadcast the smaller operand when its shape (with
// leading unit extents dropped) is a suffix of the larger one's shape, or
// when it is a scalar.

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var subtract(Var a, Var b);
Var multiply(Var a, Var b);
/// Elementwise x^p. A positive `grad_eps` evaluates the derivative at
/// x + grad_eps, keeping it finite at x = 0 for p < 1 without changing values.
Var power(Var x, double exponent, double grad_eps = 0.0);
Var exp(Var x);
Var log(Var x);
Var tanh(Var x);
Var sigmoid(Var x);
Var relu(Var x);
Var leaky_relu(Var x, double slope = 0.01);
Var sum(Var x);
Var mean(Var x);
/// Column-wise concatenation of two matrices with equal row counts.
Var concat(Var a, Var b);
/// Repeats a row vector into `rows` rows.
Var broadcast(Var row, std::size_t rows);
/// (m x p, k x p) -> m x k matrix of squared Euclidean distances.
Var pairwise_sqdist(Var a, Var b);
Var scale(Var x, double factor);
Var select_columns(Var x, std::span<const std::size_t> columns);
Var slice_rows(Var x, std::size_t begin, std::size_t count);
/// Values clamped to [lo, hi]; gradient passes only where lo < x < hi.
Var clamp(Var x, double lo, double hi);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return subtract(a, b); }
inline Var operator*(Var a, Var b) { return multiply(a, b); }
inline Var operator*(double c, Var x) { return scale(x, c); }

/// Extra arguments for apply_op; only the fields relevant to `kind` are read.
struct OpParams {
  double exponent = 1.0;
  double grad_eps = 0.0;
  double slope = 0.01;
  double factor = 1.0;
  double lo = 0.0;
  double hi = 1.0;
  std::size_t rows = 1;
  std::size_t begin = 0;
  std::vector<std::size_t> columns;
};

/// Uniform dispatch over every non-leaf op kind.
Var apply_op(OpKind kind, std::span<const Var> inputs, const OpParams& params = {});

struct GradCheckResult {
  bool passed = false;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  Tensor analytic;
  Tensor numeric;
};

using ScalarFunction = std::function<Var(Tape&, Var)>;

/// Compares backward() against central finite differences at `point`.
/// Per-component error is |a - n| / max(|a|, |n|, abs_floor), so components
/// whose gradient is near zero are judged on absolute error.
GradCheckResult gradient_check(const ScalarFunction& f, const Tensor& point, double eps,
                               double rtol, double abs_floor = 1e-6);

}  // namespace srlfi::ad
