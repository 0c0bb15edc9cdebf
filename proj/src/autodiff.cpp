#include "srlfi/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <Eigen/Core>

#include "srlfi/errors.hpp"

namespace srlfi::ad {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

ConstMatrixMap as_matrix(const Tensor& t) {
  return ConstMatrixMap(t.values().data(), static_cast<Eigen::Index>(t.shape()[0]),
                        static_cast<Eigen::Index>(t.shape()[1]));
}

MatrixMap as_matrix(Tensor& t) {
  return MatrixMap(t.values().data(), static_cast<Eigen::Index>(t.shape()[0]),
                   static_cast<Eigen::Index>(t.shape()[1]));
}

[[noreturn]] void shape_mismatch(OpKind kind, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op_name(kind)) + ": incompatible shapes " + shape_string(a) +
                   " and " + shape_string(b));
}

[[noreturn]] void shape_invalid(OpKind kind, const Shape& a, std::string_view why) {
  throw ShapeError(std::string(op_name(kind)) + ": " + std::string(why) + ", got " +
                   shape_string(a));
}

Tape& common_tape(OpKind kind, Var a, Var b) {
  if (!a.valid() || !b.valid() || a.tape() != b.tape())
    throw std::invalid_argument(std::string(op_name(kind)) + ": operands must share a tape");
  return *a.tape();
}

Tape& tape_of(OpKind kind, Var x) {
  if (!x.valid()) throw std::invalid_argument(std::string(op_name(kind)) + ": invalid operand");
  return *x.tape();
}

void require_matrix(OpKind kind, const Tensor& t) {
  if (t.rank() != 2) shape_invalid(kind, t.shape(), "expected a matrix");
}

Shape strip_leading_ones(const Shape& s) {
  auto first = std::find_if(s.begin(), s.end(), [](std::size_t e) { return e != 1; });
  return Shape(first, s.end());
}

// Broadcast plan for binary elementwise ops. The smaller operand repeats
// with period small_size along the flattened larger one.
struct Broadcast {
  Shape out_shape;
  bool a_is_big = true;
  std::size_t small_size = 0;
};

Broadcast plan_broadcast(OpKind kind, const Shape& sa, const Shape& sb) {
  if (sa == sb) return {sa, true, shape_size(sa)};
  const std::size_t na = shape_size(sa);
  const std::size_t nb = shape_size(sb);
  const bool a_big = na > nb || (na == nb && sa.size() >= sb.size());
  const Shape& big = a_big ? sa : sb;
  const Shape small = strip_leading_ones(a_big ? sb : sa);
  const std::size_t ns = a_big ? nb : na;
  if (ns == 1) return {big, a_big, 1};
  const Shape big_stripped = strip_leading_ones(big);
  if (small.size() > big_stripped.size() ||
      !std::equal(small.rbegin(), small.rend(), big_stripped.rbegin()))
    shape_mismatch(kind, sa, sb);
  return {big, a_big, ns};
}

void accumulate_reduced(Tensor& grad, const Tensor& upstream, double factor) {
  const std::size_t n = grad.size();
  auto g = grad.values();
  auto u = upstream.values();
  if (n == u.size()) {
    for (std::size_t i = 0; i < n; ++i) g[i] += factor * u[i];
  } else {
    for (std::size_t i = 0; i < u.size(); ++i) g[i % n] += factor * u[i];
  }
}

template <class Forward, class Derivative>
Var unary(OpKind kind, Var x, Forward forward, Derivative derivative) {
  Tape& tape = tape_of(kind, x);
  const Tensor& in = x.value();
  Tensor out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = forward(in[i]);
  return tape.record(kind, std::move(out), {x.id()}, [derivative](const BackwardArgs& args) {
    const Tensor& input = args.tape.value(args.tape.parents(args.self)[0]);
    const Tensor& output = args.tape.value(args.self);
    Tensor& g = *args.parent_grads[0];
    for (std::size_t i = 0; i < g.size(); ++i)
      g[i] += args.upstream[i] * derivative(input[i], output[i]);
  });
}

}  // namespace

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::subtract: return "subtract";
    case OpKind::multiply: return "multiply";
    case OpKind::power: return "power";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::tanh: return "tanh";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::relu: return "relu";
    case OpKind::leaky_relu: return "leaky_relu";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::concat: return "concat";
    case OpKind::broadcast: return "broadcast";
    case OpKind::pairwise_sqdist: return "pairwise_sqdist";
    case OpKind::scale: return "scale";
    case OpKind::select_columns: return "select_columns";
    case OpKind::slice_rows: return "slice_rows";
    case OpKind::clamp: return "clamp";
  }
  return "unknown";
}

const Tensor& Var::value() const {
  if (!tape_) throw std::invalid_argument("value() on an unbound Var");
  return tape_->value(id_);
}

const Tensor& GradientMap::at(Var leaf) const {
  auto it = grads_.find(leaf.id());
  if (it == grads_.end())
    throw std::out_of_range("no gradient recorded for node " + std::to_string(leaf.id()));
  return it->second;
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{OpKind::leaf, std::move(value), {}, requires_grad, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(OpKind kind, Tensor value, std::vector<NodeId> parents, BackwardFn backward) {
  bool needs = false;
  for (auto p : parents) needs = needs || nodes_[p].requires_grad;
  nodes_.push_back(Node{kind, std::move(value), std::move(parents), needs, std::move(backward)});
  return Var(this, nodes_.size() - 1);
}

GradientMap Tape::backward(Var root) const {
  if (root.tape() != this) throw std::invalid_argument("backward: root is not on this tape");
  const Tensor& root_value = nodes_[root.id()].value;
  if (root_value.size() != 1)
    throw ShapeError("backward: root must be scalar, got " + shape_string(root_value.shape()));

  std::vector<Tensor> grads(root.id() + 1);
  grads[root.id()] = Tensor(root_value.shape(), 1.0);
  std::vector<Tensor*> slots;
  for (NodeId id = root.id() + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (node.kind == OpKind::leaf || !node.requires_grad || grads[id].empty()) continue;
    slots.assign(node.parents.size(), nullptr);
    for (std::size_t k = 0; k < node.parents.size(); ++k) {
      const NodeId p = node.parents[k];
      if (!nodes_[p].requires_grad) continue;
      if (grads[p].empty()) grads[p] = Tensor(nodes_[p].value.shape(), 0.0);
      slots[k] = &grads[p];
    }
    node.backward(BackwardArgs{*this, id, grads[id], slots});
    grads[id] = Tensor();
  }

  GradientMap result;
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    const Node& node = nodes_[id];
    if (node.kind != OpKind::leaf || !node.requires_grad) continue;
    if (id < grads.size() && !grads[id].empty())
      result.grads_.emplace(id, std::move(grads[id]));
    else
      result.grads_.emplace(id, Tensor(node.value.shape(), 0.0));
  }
  return result;
}

Var matmul(Var a, Var b) {
  Tape& tape = common_tape(OpKind::matmul, a, b);
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  if (ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0])
    shape_mismatch(OpKind::matmul, ta.shape(), tb.shape());
  Tensor out({ta.shape()[0], tb.shape()[1]});
  as_matrix(out).noalias() = as_matrix(ta) * as_matrix(tb);
  return tape.record(OpKind::matmul, std::move(out), {a.id(), b.id()}, [](const BackwardArgs& args) {
    const auto& parents = args.tape.parents(args.self);
    const Tensor& ta = args.tape.value(parents[0]);
    const Tensor& tb = args.tape.value(parents[1]);
    auto up = as_matrix(args.upstream);
    if (Tensor* ga = args.parent_grads[0]) as_matrix(*ga).noalias() += up * as_matrix(tb).transpose();
    if (Tensor* gb = args.parent_grads[1]) as_matrix(*gb).noalias() += as_matrix(ta).transpose() * up;
  });
}

namespace {

Var additive(OpKind kind, Var a, Var b, double sign) {
  Tape& tape = common_tape(kind, a, b);
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  const Broadcast plan = plan_broadcast(kind, ta.shape(), tb.shape());
  Tensor out(plan.out_shape);
  const std::size_t n = out.size();
  const auto& big = plan.a_is_big ? ta : tb;
  const auto& small = plan.a_is_big ? tb : ta;
  const double big_sign = plan.a_is_big ? 1.0 : sign;
  const double small_sign = plan.a_is_big ? sign : 1.0;
  for (std::size_t i = 0; i < n; ++i)
    out[i] = big_sign * big[i] + small_sign * small[i % plan.small_size];
  return tape.record(kind, std::move(out), {a.id(), b.id()}, [sign](const BackwardArgs& args) {
    if (Tensor* ga = args.parent_grads[0]) accumulate_reduced(*ga, args.upstream, 1.0);
    if (Tensor* gb = args.parent_grads[1]) accumulate_reduced(*gb, args.upstream, sign);
  });
}

}  // namespace

Var add(Var a, Var b) { return additive(OpKind::add, a, b, 1.0); }
Var subtract(Var a, Var b) { return additive(OpKind::subtract, a, b, -1.0); }

Var multiply(Var a, Var b) {
  Tape& tape = common_tape(OpKind::multiply, a, b);
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  const Broadcast plan = plan_broadcast(OpKind::multiply, ta.shape(), tb.shape());
  Tensor out(plan.out_shape);
  const auto& big = plan.a_is_big ? ta : tb;
  const auto& small = plan.a_is_big ? tb : ta;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = big[i] * small[i % plan.small_size];
  return tape.record(OpKind::multiply, std::move(out), {a.id(), b.id()},
                     [plan](const BackwardArgs& args) {
    const auto& parents = args.tape.parents(args.self);
    const Tensor& ta = args.tape.value(parents[0]);
    const Tensor& tb = args.tape.value(parents[1]);
    const Tensor& up = args.upstream;
    const std::size_t ns = plan.small_size;
    // Gradient for one operand is upstream times the other, reduced onto its shape.
    auto push = [&](Tensor* g, const Tensor& other, bool self_big) {
      if (!g) return;
      const bool other_big = !self_big;
      for (std::size_t i = 0; i < up.size(); ++i) {
        const double o = other_big ? other[i] : other[i % ns];
        const std::size_t dst = self_big ? i : i % ns;
        (*g)[dst] += up[i] * o;
      }
    };
    push(args.parent_grads[0], tb, plan.a_is_big);
    push(args.parent_grads[1], ta, !plan.a_is_big);
  });
}

Var power(Var x, double exponent, double grad_eps) {
  const Tensor& in = x.value();
  const bool integral = std::floor(exponent) == exponent;
  for (double v : in.values()) {
    if (!integral && v < 0.0)
      throw DomainError("power: negative base " + std::to_string(v) + " with fractional exponent " +
                        std::to_string(exponent));
    if (exponent < 0.0 && v == 0.0) throw DomainError("power: zero base with negative exponent");
  }
  return unary(
      OpKind::power, x, [exponent](double v) { return std::pow(v, exponent); },
      [exponent, grad_eps](double v, double) {
        return exponent * std::pow(v + grad_eps, exponent - 1.0);
      });
}

Var exp(Var x) {
  return unary(
      OpKind::exp, x, [](double v) { return std::exp(v); }, [](double, double out) { return out; });
}

Var log(Var x) {
  for (double v : x.value().values())
    if (!(v > 0.0)) throw DomainError("log: non-positive input " + std::to_string(v));
  return unary(
      OpKind::log, x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var tanh(Var x) {
  return unary(
      OpKind::tanh, x, [](double v) { return std::tanh(v); },
      [](double, double out) { return 1.0 - out * out; });
}

Var sigmoid(Var x) {
  return unary(
      OpKind::sigmoid, x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double out) { return out * (1.0 - out); });
}

Var relu(Var x) {
  return unary(
      OpKind::relu, x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(Var x, double slope) {
  return unary(
      OpKind::leaky_relu, x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Var scale(Var x, double factor) {
  return unary(
      OpKind::scale, x, [factor](double v) { return factor * v; },
      [factor](double, double) { return factor; });
}

Var clamp(Var x, double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clamp: lo must not exceed hi");
  return unary(
      OpKind::clamp, x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

Var sum(Var x) {
  Tape& tape = tape_of(OpKind::sum, x);
  double total = 0.0;
  for (double v : x.value().values()) total += v;
  return tape.record(OpKind::sum, Tensor::scalar(total), {x.id()}, [](const BackwardArgs& args) {
    Tensor& g = *args.parent_grads[0];
    const double u = args.upstream[0];
    for (double& v : g.values()) v += u;
  });
}

Var mean(Var x) {
  const double n = static_cast<double>(x.value().size());
  Tape& tape = tape_of(OpKind::mean, x);
  double total = 0.0;
  for (double v : x.value().values()) total += v;
  return tape.record(OpKind::mean, Tensor::scalar(total / n), {x.id()},
                     [n](const BackwardArgs& args) {
    Tensor& g = *args.parent_grads[0];
    const double u = args.upstream[0] / n;
    for (double& v : g.values()) v += u;
  });
}

Var concat(Var a, Var b) {
  Tape& tape = common_tape(OpKind::concat, a, b);
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  if (ta.rank() != 2 || tb.rank() != 2 || ta.shape()[0] != tb.shape()[0])
    shape_mismatch(OpKind::concat, ta.shape(), tb.shape());
  const std::size_t rows = ta.shape()[0], ca = ta.shape()[1], cb = tb.shape()[1];
  Tensor out({rows, ca + cb});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(ta.row(r).begin(), ca, out.row(r).begin());
    std::copy_n(tb.row(r).begin(), cb, out.row(r).begin() + ca);
  }
  return tape.record(OpKind::concat, std::move(out), {a.id(), b.id()},
                     [rows, ca, cb](const BackwardArgs& args) {
    for (std::size_t r = 0; r < rows; ++r) {
      auto up = args.upstream.row(r);
      if (Tensor* ga = args.parent_grads[0])
        for (std::size_t c = 0; c < ca; ++c) ga->at(r, c) += up[c];
      if (Tensor* gb = args.parent_grads[1])
        for (std::size_t c = 0; c < cb; ++c) gb->at(r, c) += up[ca + c];
    }
  });
}

Var broadcast(Var row, std::size_t rows) {
  Tape& tape = tape_of(OpKind::broadcast, row);
  const Tensor& in = row.value();
  if (in.rank() > 2 || in.rows() != 1 || rows == 0)
    shape_invalid(OpKind::broadcast, in.shape(), "expected a single row and positive row count");
  const std::size_t cols = in.size();
  Tensor out({rows, cols});
  for (std::size_t r = 0; r < rows; ++r) std::copy(in.values().begin(), in.values().end(), out.row(r).begin());
  return tape.record(OpKind::broadcast, std::move(out), {row.id()}, [](const BackwardArgs& args) {
    accumulate_reduced(*args.parent_grads[0], args.upstream, 1.0);
  });
}

Var pairwise_sqdist(Var a, Var b) {
  Tape& tape = common_tape(OpKind::pairwise_sqdist, a, b);
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  if (ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[1])
    shape_mismatch(OpKind::pairwise_sqdist, ta.shape(), tb.shape());
  const std::size_t m = ta.shape()[0], k = tb.shape()[0], p = ta.shape()[1];
  Tensor out({m, k});
  for (std::size_t i = 0; i < m; ++i) {
    auto ai = ta.row(i);
    for (std::size_t j = 0; j < k; ++j) {
      auto bj = tb.row(j);
      double d = 0.0;
      for (std::size_t c = 0; c < p; ++c) {
        const double diff = ai[c] - bj[c];
        d += diff * diff;
      }
      out.at(i, j) = d;
    }
  }
  return tape.record(OpKind::pairwise_sqdist, std::move(out), {a.id(), b.id()},
                     [m, k, p](const BackwardArgs& args) {
    const auto& parents = args.tape.parents(args.self);
    const Tensor& ta = args.tape.value(parents[0]);
    const Tensor& tb = args.tape.value(parents[1]);
    Tensor* ga = args.parent_grads[0];
    Tensor* gb = args.parent_grads[1];
    for (std::size_t i = 0; i < m; ++i) {
      auto ai = ta.row(i);
      for (std::size_t j = 0; j < k; ++j) {
        const double u = 2.0 * args.upstream.at(i, j);
        if (u == 0.0) continue;
        auto bj = tb.row(j);
        for (std::size_t c = 0; c < p; ++c) {
          const double diff = u * (ai[c] - bj[c]);
          if (ga) ga->at(i, c) += diff;
          if (gb) gb->at(j, c) -= diff;
        }
      }
    }
  });
}

Var select_columns(Var x, std::span<const std::size_t> columns) {
  Tape& tape = tape_of(OpKind::select_columns, x);
  const Tensor& in = x.value();
  require_matrix(OpKind::select_columns, in);
  if (columns.empty()) shape_invalid(OpKind::select_columns, in.shape(), "empty column set");
  const std::size_t rows = in.shape()[0], cols = in.shape()[1];
  for (auto c : columns)
    if (c >= cols)
      shape_invalid(OpKind::select_columns, in.shape(), "column " + std::to_string(c) + " out of range");
  std::vector<std::size_t> idx(columns.begin(), columns.end());
  Tensor out({rows, idx.size()});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < idx.size(); ++j) out.at(r, j) = in.at(r, idx[j]);
  return tape.record(OpKind::select_columns, std::move(out), {x.id()},
                     [idx = std::move(idx), rows](const BackwardArgs& args) {
    Tensor& g = *args.parent_grads[0];
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < idx.size(); ++j) g.at(r, idx[j]) += args.upstream.at(r, j);
  });
}

Var slice_rows(Var x, std::size_t begin, std::size_t count) {
  Tape& tape = tape_of(OpKind::slice_rows, x);
  const Tensor& in = x.value();
  require_matrix(OpKind::slice_rows, in);
  if (count == 0 || begin + count > in.shape()[0])
    shape_invalid(OpKind::slice_rows, in.shape(),
                  "row range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                      ") out of bounds");
  const std::size_t cols = in.shape()[1];
  Tensor out({count, cols});
  std::copy_n(in.values().begin() + static_cast<std::ptrdiff_t>(begin * cols), count * cols,
              out.values().begin());
  return tape.record(OpKind::slice_rows, std::move(out), {x.id()},
                     [begin, cols](const BackwardArgs& args) {
    auto g = args.parent_grads[0]->values().subspan(begin * cols, args.upstream.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += args.upstream[i];
  });
}

Var apply_op(OpKind kind, std::span<const Var> inputs, const OpParams& params) {
  auto need = [&](std::size_t n) {
    if (inputs.size() != n)
      throw std::invalid_argument(std::string(op_name(kind)) + ": expected " + std::to_string(n) +
                                  " inputs, got " + std::to_string(inputs.size()));
  };
  switch (kind) {
    case OpKind::leaf: throw std::invalid_argument("apply_op: leaf is not an operation");
    case OpKind::matmul: need(2); return matmul(inputs[0], inputs[1]);
    case OpKind::add: need(2); return add(inputs[0], inputs[1]);
    case OpKind::subtract: need(2); return subtract(inputs[0], inputs[1]);
    case OpKind::multiply: need(2); return multiply(inputs[0], inputs[1]);
    case OpKind::power: need(1); return power(inputs[0], params.exponent, params.grad_eps);
    case OpKind::exp: need(1); return exp(inputs[0]);
    case OpKind::log: need(1); return log(inputs[0]);
    case OpKind::tanh: need(1); return tanh(inputs[0]);
    case OpKind::sigmoid: need(1); return sigmoid(inputs[0]);
    case OpKind::relu: need(1); return relu(inputs[0]);
    case OpKind::leaky_relu: need(1); return leaky_relu(inputs[0], params.slope);
    case OpKind::sum: need(1); return sum(inputs[0]);
    case OpKind::mean: need(1); return mean(inputs[0]);
    case OpKind::concat: need(2); return concat(inputs[0], inputs[1]);
    case OpKind::broadcast: need(1); return broadcast(inputs[0], params.rows);
    case OpKind::pairwise_sqdist: need(2); return pairwise_sqdist(inputs[0], inputs[1]);
    case OpKind::scale: need(1); return scale(inputs[0], params.factor);
    case OpKind::select_columns: need(1); return select_columns(inputs[0], params.columns);
    case OpKind::slice_rows: need(1); return slice_rows(inputs[0], params.begin, params.rows);
    case OpKind::clamp: need(1); return clamp(inputs[0], params.lo, params.hi);
  }
  throw std::invalid_argument("apply_op: unknown op kind");
}

GradCheckResult gradient_check(const ScalarFunction& f, const Tensor& point, double eps,
                               double rtol, double abs_floor) {
  if (!(eps > 0.0)) throw std::invalid_argument("gradient_check: eps must be positive");
  GradCheckResult result;
  {
    Tape tape;
    Var x = tape.variable(point);
    Var y = f(tape, x);
    result.analytic = tape.backward(y).at(x);
  }
  auto evaluate = [&](const Tensor& at) {
    Tape tape;
    return f(tape, tape.constant(at)).value().item();
  };
  result.numeric = Tensor(point.shape());
  Tensor probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    probe[i] = point[i] + eps;
    const double up = evaluate(probe);
    probe[i] = point[i] - eps;
    const double down = evaluate(probe);
    probe[i] = point[i];
    const double numeric = (up - down) / (2.0 * eps);
    result.numeric[i] = numeric;
    const double analytic = result.analytic[i];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), abs_floor});
    double err = std::abs(analytic - numeric) / denom;
    if (std::isnan(err)) err = std::numeric_limits<double>::infinity();
    if (err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_index = i;
    }
  }
  result.passed = result.max_rel_error <= rtol;
  return result;
}

}  // namespace srlfi::ad
