#include <cmath>
#include <random>

#include <doctest.h>

#include "srlfi/autodiff.hpp"
#include "srlfi/errors.hpp"
#include "test_support.hpp"

using namespace srlfi;
using namespace srlfi::ad;
using srlfi::test::random_matrix;

TEST_SUITE("autodiff") {

TEST_CASE("tensor basics") {
  const Tensor s = Tensor::scalar(3.0);
  CHECK(s.shape() == Shape{1});
  CHECK(s.item() == 3.0);
  CHECK_THROWS_AS(Tensor(Shape{2, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  const Tensor m = Tensor::matrix({{1, 2}, {3, 4}, {5, 6}});
  CHECK(m.rows() == 3);
  CHECK(m.cols() == 2);
  CHECK(m.at(2, 1) == 6.0);
  const std::vector<std::size_t> idx{2, 0};
  CHECK(gather_rows(m, idx) == Tensor::matrix({{5, 6}, {1, 2}}));
}

TEST_CASE("matmul with the identity returns the other operand") {
  Rng rng(1);
  Tape tape;
  const Tensor a = random_matrix(3, 3, rng);
  Var out = matmul(tape.constant(Tensor::identity(3)), tape.constant(a));
  CHECK(out.value() == a);
}

TEST_CASE("relu forward") {
  Tape tape;
  Var out = relu(tape.constant(Tensor::vector({-1, 0, 2})));
  CHECK(out.value() == Tensor::vector({0, 0, 2}));
}

TEST_CASE("pairwise squared distance by hand") {
  Tape tape;
  Var out = pairwise_sqdist(tape.constant(Tensor::matrix({{0}, {2}})), tape.constant(Tensor::matrix({{1}})));
  CHECK(out.value() == Tensor::matrix({{1}, {1}}));
  Var wide = pairwise_sqdist(tape.constant(Tensor::matrix({{0, 0}, {1, 1}, {3, 4}})),
                             tape.constant(Tensor::matrix({{0, 0}, {1, 0}})));
  CHECK(wide.shape() == Shape{3, 2});
  CHECK(wide.value().at(2, 0) == 25.0);
  CHECK(wide.value().at(1, 1) == 1.0);
}

TEST_CASE("backward of sum of squares") {
  Tape tape;
  Var x = tape.variable(Tensor::vector({1, -2}));
  const auto g = tape.backward(sum(x * x));
  CHECK(g.at(x) == Tensor::vector({2, -4}));
}

TEST_CASE("constant root gives zero gradients") {
  Tape tape;
  Var x = tape.variable(Tensor::vector({1, 2, 3}));
  Var c = tape.constant(Tensor::scalar(5.0));
  const auto g = tape.backward(c);
  CHECK(g.at(x) == Tensor::vector({0, 0, 0}));
}

TEST_CASE("sigmoid slope at zero") {
  Tape tape;
  Var w = tape.variable(Tensor::scalar(0.0));
  Var x = tape.constant(Tensor::scalar(1.0));
  const auto g = tape.backward(sigmoid(w * x));
  CHECK(g.at(w).item() == doctest::Approx(0.25));
}

TEST_CASE("backward rejects non-scalar and foreign roots") {
  Tape tape, other;
  Var x = tape.variable(Tensor::vector({1, 2}));
  CHECK_THROWS_AS(tape.backward(x * x), ShapeError);
  Var y = other.variable(Tensor::scalar(1.0));
  CHECK_THROWS(tape.backward(y));
}

TEST_CASE("gradient map holds exactly the gradient-requiring leaves") {
  Tape tape;
  Var a = tape.variable(Tensor::vector({1, 2}));
  Var unused = tape.variable(Tensor::vector({7}));
  Var c = tape.constant(Tensor::vector({3, 4}));
  const auto g = tape.backward(sum(a * c));
  CHECK(g.size() == 2);
  CHECK(g.contains(a));
  CHECK(g.contains(unused));
  CHECK_FALSE(g.contains(c));
  CHECK(g.at(unused) == Tensor::vector({0}));
  CHECK(g.at(a) == Tensor::vector({3, 4}));
}

TEST_CASE("shape mismatch names the op and shapes") {
  Tape tape;
  Var a = tape.constant(Tensor(Shape{2, 3}));
  Var b = tape.constant(Tensor(Shape{2, 3}));
  try {
    matmul(a, b);
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("2x3") != std::string::npos);
  }
  CHECK_THROWS_AS(add(a, tape.constant(Tensor(Shape{3, 2}))), ShapeError);
  CHECK_THROWS_AS(pairwise_sqdist(a, tape.constant(Tensor(Shape{2, 2}))), ShapeError);
}

TEST_CASE("domain errors") {
  Tape tape;
  CHECK_THROWS_AS(log(tape.constant(Tensor::vector({1.0, 0.0}))), DomainError);
  CHECK_THROWS_AS(log(tape.constant(Tensor::vector({-1.0}))), DomainError);
  CHECK_THROWS_AS(power(tape.constant(Tensor::vector({-1.0})), 0.5), DomainError);
  CHECK_THROWS_AS(power(tape.constant(Tensor::vector({0.0})), -1.0), DomainError);
  CHECK_NOTHROW(power(tape.constant(Tensor::vector({-2.0})), 2.0));
}

TEST_CASE("trailing-dimension broadcasting") {
  Tape tape;
  Var m = tape.variable(Tensor::matrix({{1, 2}, {3, 4}}));
  Var row = tape.variable(Tensor::vector({10, 20}));
  Var out = m + row;
  CHECK(out.value() == Tensor::matrix({{11, 22}, {13, 24}}));
  const auto g = tape.backward(sum(out));
  CHECK(g.at(row) == Tensor::vector({2, 2}));
}

TEST_CASE("tape nodes are topologically ordered") {
  Rng rng(3);
  Tape tape;
  Var x = tape.variable(random_matrix(3, 2, rng));
  Var w = tape.variable(random_matrix(2, 4, rng));
  Var y = mean(tanh(matmul(x, w)) * sigmoid(matmul(x, w)));
  for (NodeId id = 0; id <= y.id(); ++id)
    for (NodeId p : tape.parents(id)) CHECK(p < id);
}

TEST_CASE("gradient check is exact for a linear function") {
  const Tensor a = Tensor::vector({0.5, -1.5, 2.0});
  auto f = [&](Tape& t, Var x) { return sum(x * t.constant(a)); };
  const auto r = gradient_check(f, Tensor::vector({1, 2, 3}), 1e-5, 1e-8);
  CHECK(r.passed);
  CHECK(r.max_rel_error < 1e-8);
}

TEST_CASE("gradient check passes on a two-layer tanh network") {
  Rng rng(11);
  const Tensor input = random_matrix(4, 3, rng);
  const Tensor w2 = random_matrix(5, 1, rng);
  auto f = [&](Tape& t, Var w1) { return sum(matmul(tanh(matmul(t.constant(input), w1)), t.constant(w2))); };
  const auto r = gradient_check(f, random_matrix(3, 5, rng), 1e-5, 1e-4);
  CHECK(r.passed);
}

TEST_CASE("gradient check flags the relu kink") {
  auto f = [](Tape&, Var x) { return sum(relu(x)); };
  const auto r = gradient_check(f, Tensor::vector({0.0}), 1e-5, 1e-4);
  CHECK_FALSE(r.passed);
  CHECK(r.numeric[0] == doctest::Approx(0.5));
}

// Every op kind against finite differences at 100 random smooth points.
TEST_CASE("all op kinds match finite differences") {
  Rng rng(2024);
  std::uniform_real_distribution<double> u(0.2, 1.5);
  std::bernoulli_distribution sign(0.5);
  const Tensor weights = random_matrix(3, 4, rng);

  struct Case {
    OpKind kind;
    std::function<Var(Tape&, Var)> f;
    bool positive;  // draw inputs away from zero (log, power, kinks)
  };
  auto reduce = [&](Tape& t, Var v) {
    // Weighted sum so every output entry carries a distinct cotangent.
    const Tensor& val = v.value();
    Tensor w(val.shape());
    for (std::size_t i = 0; i < w.size(); ++i) w.values()[i] = 0.3 + 0.1 * static_cast<double>(i % 7);
    return sum(v * t.constant(w));
  };
  const std::vector<Case> cases{
      {OpKind::matmul, [&](Tape& t, Var x) { return reduce(t, matmul(x, t.constant(weights))); }, false},
      {OpKind::matmul, [&](Tape& t, Var x) { return reduce(t, matmul(t.constant(Tensor::matrix({{1, 2, 3}, {0, 1, -1}})), x)); }, false},
      {OpKind::add, [&](Tape& t, Var x) { return reduce(t, x + x * x); }, false},
      {OpKind::subtract, [&](Tape& t, Var x) { return reduce(t, x * x - x); }, false},
      {OpKind::multiply, [&](Tape& t, Var x) { return reduce(t, x * x); }, false},
      {OpKind::power, [&](Tape& t, Var x) { return reduce(t, power(x, 1.5)); }, true},
      {OpKind::power, [&](Tape& t, Var x) { return reduce(t, power(x, -0.7)); }, true},
      {OpKind::exp, [&](Tape& t, Var x) { return reduce(t, exp(x)); }, false},
      {OpKind::log, [&](Tape& t, Var x) { return reduce(t, log(x)); }, true},
      {OpKind::tanh, [&](Tape& t, Var x) { return reduce(t, tanh(x)); }, false},
      {OpKind::sigmoid, [&](Tape& t, Var x) { return reduce(t, sigmoid(x)); }, false},
      {OpKind::relu, [&](Tape& t, Var x) { return reduce(t, relu(x)); }, false},
      {OpKind::leaky_relu, [&](Tape& t, Var x) { return reduce(t, leaky_relu(x)); }, false},
      {OpKind::sum, [&](Tape&, Var x) { return sum(x * x); }, false},
      {OpKind::mean, [&](Tape&, Var x) { return mean(x * x); }, false},
      {OpKind::concat, [&](Tape& t, Var x) { return reduce(t, concat(x, x * x)); }, false},
      {OpKind::broadcast,
       [&](Tape& t, Var x) { return reduce(t, broadcast(slice_rows(x, 1, 1), 4)); }, false},
      {OpKind::pairwise_sqdist, [&](Tape& t, Var x) { return reduce(t, pairwise_sqdist(x, x * x)); }, false},
      {OpKind::scale, [&](Tape& t, Var x) { return reduce(t, scale(x, -2.5)); }, false},
      {OpKind::select_columns,
       [&](Tape& t, Var x) {
         const std::vector<std::size_t> cols{2, 0, 2};
         return reduce(t, select_columns(x, cols));
       },
       false},
      {OpKind::slice_rows, [&](Tape& t, Var x) { return reduce(t, slice_rows(x, 1, 2)); }, false},
      {OpKind::clamp, [&](Tape& t, Var x) { return reduce(t, clamp(x, -0.1, 0.1) + x); }, true},
      {OpKind::clamp, [&](Tape& t, Var x) { return reduce(t, clamp(x, -2.0, 2.0) * x); }, false},
  };

  for (const auto& c : cases) {
    CAPTURE(std::string(op_name(c.kind)));
    std::size_t failures = 0;
    for (int trial = 0; trial < 100; ++trial) {
      Tensor point({3, 3});
      for (double& v : point.values()) {
        const double mag = u(rng);
        v = (c.positive || !sign(rng)) ? mag : -mag;
      }
      const auto r = gradient_check(c.f, point, 1e-5, 1e-4);
      if (!r.passed) ++failures;
    }
    CHECK(failures == 0);
  }
}

TEST_CASE("apply_op dispatches to the named op") {
  Tape tape;
  Var x = tape.constant(Tensor::vector({-1, 0, 2}));
  const std::vector<Var> in{x};
  CHECK(apply_op(OpKind::relu, in).value() == Tensor::vector({0, 0, 2}));
  OpParams p;
  p.exponent = 2.0;
  CHECK(apply_op(OpKind::power, in, p).value() == Tensor::vector({1, 0, 4}));
  CHECK(tape.kind(apply_op(OpKind::exp, in).id()) == OpKind::exp);
  CHECK_THROWS(apply_op(OpKind::matmul, in));
}

TEST_CASE("tape replay is bitwise deterministic") {
  auto run = [] {
    Rng rng(99);
    Tape tape;
    Var w = tape.variable(random_matrix(3, 4, rng));
    Var x = tape.constant(random_matrix(5, 3, rng));
    Var loss = mean(power(pairwise_sqdist(tanh(matmul(x, w)), tanh(matmul(x, w))) + tape.constant(Tensor::scalar(1.0)), 0.5));
    return std::make_pair(loss.value().item(), tape.backward(loss).at(w));
  };
  const auto a = run(), b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

}  // TEST_SUITE
