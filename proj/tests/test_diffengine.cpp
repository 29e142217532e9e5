#include <cmath>

#include "doctest.h"
#include "eclab/adam.hpp"
#include "eclab/grad_check.hpp"
#include "eclab/ops.hpp"
#include "eclab/rng.hpp"
#include "properties.hpp"

using namespace eclab;
using Tn = Tensor<double>;

TEST_CASE("tensor shape invariants") {
  CHECK_THROWS_AS(Tn(Shape{2, 3}, std::vector<double>(5)), ShapeError);
  Tn t(Shape{2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(Tn::scalar(4.0).item() == 4.0);
  t[1] = std::nan("");
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("primitive op values") {
  Tape<double> tape(false);
  CHECK(ops::sigmoid(tape.constant(Tn::scalar(0.0))).value().item() == doctest::Approx(0.5));
  auto sm = ops::softmax(tape.constant(Tn::matrix(1, 4, 0.0))).value();
  for (double p : sm.data()) CHECK(p == doctest::Approx(0.25));
  auto a = tape.constant(Tn(Shape{2, 2}, {1, 2, 3, 4}));
  auto b = tape.constant(Tn(Shape{2, 1}, {5, 6}));
  CHECK(ops::matmul(a, b).value().data()[0] == 17);
  CHECK(ops::matmul(a, b).value().data()[1] == 39);
}

TEST_CASE("max against a scalar below the kink has zero gradient") {
  Tape<double> tape(false);
  auto x = tape.variable(Tn::scalar(-1.0));
  auto y = ops::maximum(x, 0.0);
  CHECK(y.value().item() == 0.0);
  tape.backward(y);
  CHECK(tape.grad(x).item() == 0.0);
}

TEST_CASE("max/min ties send the gradient to the first operand") {
  Tape<double> tape(false);
  auto a = tape.variable(Tn::scalar(1.0));
  auto b = tape.variable(Tn::scalar(1.0));
  tape.backward(ops::maximum(a, b) + ops::minimum(a, b));
  CHECK(tape.grad(a).item() == 2.0);
  CHECK(tape.grad(b).item() == 0.0);
}

TEST_CASE("shape mismatch names the op and both shapes") {
  Tape<double> tape(false);
  auto a = tape.constant(Tn::matrix(2, 3));
  auto b = tape.constant(Tn::matrix(3, 2));
  try {
    ops::add(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string what = e.what();
    CHECK(what.find("add") != std::string::npos);
    CHECK(what.find("[2,3]") != std::string::npos);
    CHECK(what.find("[3,2]") != std::string::npos);
  }
  CHECK_THROWS_AS(ops::matmul(a, a), ShapeError);
}

TEST_CASE("backward: sum(w*w) and unreachable/constant losses") {
  Tape<double> tape(false);
  auto w = tape.variable(Tn(Shape{1, 2}, {1, 2}));
  auto unused = tape.variable(Tn(Shape{1, 2}, {5, 5}));
  tape.backward(ops::sum(w * w));
  CHECK(tape.grad(w).data()[0] == 2.0);
  CHECK(tape.grad(w).data()[1] == 4.0);
  CHECK(tape.grad(unused).data()[0] == 0.0);

  Tape<double> t2(false);
  auto p = t2.variable(Tn(Shape{1, 2}, {1, 2}));
  t2.backward(ops::sum(t2.constant(Tn::matrix(1, 2, 3.0))));
  CHECK(t2.grad(p).data()[1] == 0.0);
}

TEST_CASE("backward rejects non-scalar losses") {
  Tape<double> tape(false);
  auto w = tape.variable(Tn(Shape{1, 2}, {1, 2}));
  CHECK_THROWS_AS(tape.backward(w * w), Error);
}

TEST_CASE("finite checking rejects NaN outputs") {
  Tape<double> tape(true);
  auto x = tape.variable(Tn::scalar(-1.0));
  CHECK_THROWS_AS(ops::log(x), Error);
}

TEST_CASE("gradient accumulation is linear") {
  auto grad_of = [](double a, double b) {
    Tape<double> tape(false);
    auto x = tape.variable(Tn(Shape{1, 3}, {0.3, -0.7, 1.1}));
    auto f = ops::sum(ops::tanh(x));
    auto g = ops::sum(ops::exp(x));
    tape.backward(ops::scale(f, a) + ops::scale(g, b));
    return tape.grad(x);
  };
  const auto f = grad_of(1, 0), g = grad_of(0, 1), combo = grad_of(2.5, -0.5);
  for (std::size_t i = 0; i < 3; ++i) CHECK(combo[i] == doctest::Approx(2.5 * f[i] - 0.5 * g[i]).epsilon(1e-12));
}

TEST_CASE("gradients are bit-identical across replays") {
  auto run = [] {
    Tape<double> tape(false);
    auto x = tape.variable(Tn(Shape{2, 2}, {0.1, 0.2, -0.3, 0.4}));
    tape.backward(ops::sum(ops::log_softmax(ops::matmul(x, x))));
    return tape.grad(x);
  };
  const auto a = run(), b = run();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("grad_check on x^2 at 3") {
  ScalarFn f = [](Tape<double>&, Var<double> x) { return ops::sum(x * x); };
  auto r = grad_check(f, Tn::scalar(3.0));
  CHECK(r.max_relative_error < 1e-6);
}

TEST_CASE("grad_check reports the failing coordinate on non-finite values") {
  ScalarFn f = [](Tape<double>&, Var<double> x) { return ops::sum(ops::log(x)); };
  CHECK_THROWS_WITH_AS(grad_check(f, Tn(Shape{1, 2}, {1.0, 1e-7})), doctest::Contains("coordinate 1"), Error);
}

TEST_CASE("every primitive op passes the finite-difference check") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto o = checks::op_gradients(seed * 101);
    INFO(o.detail);
    CHECK(o.pass);
  }
}

TEST_CASE("adam: zero gradient without L2 leaves parameters unchanged") {
  std::vector<Tn> params{Tn(Shape{1, 2}, {0.5, -0.5})};
  std::vector<Tn> grads{Tn::matrix(1, 2)};
  AdamState<double> state;
  state.config.l2 = 0.0;
  adam_step<double>(params, grads, state);
  CHECK(params[0][0] == 0.5);
  CHECK(params[0][1] == -0.5);
}

TEST_CASE("adam: the first step moves each coordinate by about lr against the gradient") {
  std::vector<Tn> params{Tn(Shape{1, 2}, {0.0, 0.0})};
  std::vector<Tn> grads{Tn(Shape{1, 2}, {3.0, -0.02})};
  AdamState<double> state;
  CHECK(state.config.learning_rate == 1e-4);
  CHECK(state.config.l2 == 1e-4);
  adam_step<double>(params, grads, state);
  CHECK(params[0][0] == doctest::Approx(-1e-4).epsilon(1e-6));
  CHECK(params[0][1] == doctest::Approx(1e-4).epsilon(1e-5));
  CHECK(state.first_moment[0].shape() == params[0].shape());
  std::vector<Tn> bad{Tn::matrix(2, 1)};
  CHECK_THROWS_AS(adam_step<double>(params, bad, state), Error);
}

TEST_CASE("rng: below is unbiased and in range; derive_seed separates streams") {
  Rng rng(42);
  std::vector<int> counts(3);
  for (int i = 0; i < 30000; ++i) counts[rng.below(3)]++;
  for (int c : counts) CHECK(std::abs(c - 10000) < 400);
  CHECK(derive_seed(0, "sender") != derive_seed(0, "branching"));
  CHECK(derive_seed(7, "init") == derive_seed(7, "init"));
  CHECK(derive_seed(7, "init") != derive_seed(8, "init"));
}
