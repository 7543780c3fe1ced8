#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>
#include <functional>
#include <vector>

#include "cmma/errors.hpp"
#include "cmma/params.hpp"
#include "cmma/rng.hpp"
#include "cmma/tape.hpp"
#include "cmma/tensor.hpp"
#include "doctest.h"

using namespace cmma;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -2.0,
                     double hi = 2.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = lo + (hi - lo) * rng.uniform();
  return t;
}

// Runs backward on the loss builder, then compares every parameter gradient
// against central finite differences.
void check_against_fd(ParamSet& params, const std::function<Var(Tape&)>& build,
                      double tol = 1e-4) {
  params.zero_grads();
  Tape tape;
  Var loss = build(tape);
  tape.backward(loss);

  auto loss_value = [&]() {
    Tape t;
    return build(t).scalar();
  };
  auto fd = finite_difference_gradient(loss_value, params, 1e-5);

  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < fd[p].numel(); ++i) {
      worst = std::max(worst, gradient_rel_error(params[p].grad[i], fd[p][i]));
    }
  }
  CHECK(worst <= tol);
}

}  // namespace

TEST_CASE("matmul forward: hand-checked 2x2 case") {
  Tape tape;
  Var a = tape.leaf(Tensor({2, 2}, {1, 2, 3, 4}));
  Var b = tape.leaf(Tensor({2, 1}, {1, 1}));
  Var c = tape.matmul(a, b);
  CHECK(c.value()[0] == 3.0);
  CHECK(c.value()[1] == 7.0);
}

TEST_CASE("softplus forward at zero") {
  Tape tape;
  Var x = tape.leaf(Tensor::scalar(0.0));
  CHECK(tape.softplus(x).scalar() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("concat along features") {
  Tape tape;
  Var a = tape.leaf(Tensor::row({1, 2}));
  Var b = tape.leaf(Tensor::row({3}));
  Var c = tape.concat(a, b);
  REQUIRE(c.value().numel() == 3);
  CHECK(c.value()[0] == 1.0);
  CHECK(c.value()[1] == 2.0);
  CHECK(c.value()[2] == 3.0);

  Var m1 = tape.leaf(Tensor({2, 2}, {1, 2, 3, 4}));
  Var m2 = tape.leaf(Tensor({2, 1}, {5, 6}));
  Var m = tape.concat(m1, m2);
  CHECK(m.value().rows() == 2);
  CHECK(m.value().cols() == 3);
  CHECK(m.value().at(0, 2) == 5.0);
  CHECK(m.value().at(1, 2) == 6.0);
}

TEST_CASE("slice inverts concat") {
  Tape tape;
  Var m = tape.leaf(Tensor({2, 3}, {1, 2, 5, 3, 4, 6}));
  Var left = tape.slice(m, 0, 2);
  Var right = tape.slice(m, 2, 3);
  CHECK(left.value().at(1, 1) == 4.0);
  CHECK(right.value().at(0, 0) == 5.0);
  CHECK(right.value().at(1, 0) == 6.0);
}

TEST_CASE("backward of sum of squares") {
  ParamSet params;
  Parameter& x = params.add("x", Tensor::row({1, 2, 3}));
  Tape tape;
  Var v = tape.param(x);
  tape.backward(tape.sum(tape.mul(v, v)));
  CHECK(x.grad[0] == 2.0);
  CHECK(x.grad[1] == 4.0);
  CHECK(x.grad[2] == 6.0);
}

TEST_CASE("backward of softplus at zero is one half") {
  ParamSet params;
  Parameter& w = params.add("w", Tensor::scalar(0.0));
  Tape tape;
  tape.backward(tape.sum(tape.softplus(tape.param(w))));
  CHECK(w.grad[0] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("finite differences: quadratic and exponential sanity values") {
  ParamSet params;
  Parameter& th = params.add("th", Tensor::scalar(3.0));
  auto quad = [&]() { return th.value[0] * th.value[0]; };
  auto g = finite_difference_gradient(quad, params, 1e-5);
  CHECK(g[0][0] == doctest::Approx(6.0).epsilon(1e-9));

  th.value[0] = 0.0;
  auto ex = [&]() { return std::exp(th.value[0]); };
  g = finite_difference_gradient(ex, params, 1e-5);
  CHECK(g[0][0] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("every primitive backward matches finite differences") {
  Rng rng(7);

  SUBCASE("matmul") {
    ParamSet params;
    Parameter& a = params.add("a", random_tensor({3, 4}, rng));
    Parameter& b = params.add("b", random_tensor({4, 2}, rng));
    check_against_fd(params, [&](Tape& t) { return t.sum(t.matmul(t.param(a), t.param(b))); });
  }
  SUBCASE("broadcast_add") {
    ParamSet params;
    Parameter& m = params.add("m", random_tensor({3, 4}, rng));
    Parameter& bias = params.add("bias", random_tensor({4}, rng));
    check_against_fd(params, [&](Tape& t) {
      return t.sum(t.square(t.broadcast_add(t.param(m), t.param(bias))));
    });
  }
  SUBCASE("add sub mul") {
    ParamSet params;
    Parameter& a = params.add("a", random_tensor({2, 5}, rng));
    Parameter& b = params.add("b", random_tensor({2, 5}, rng));
    check_against_fd(params, [&](Tape& t) {
      Var s = t.add(t.param(a), t.param(b));
      Var d = t.sub(t.param(a), t.param(b));
      return t.sum(t.mul(s, d));
    });
  }
  SUBCASE("exp") {
    ParamSet params;
    Parameter& x = params.add("x", random_tensor({6}, rng));
    check_against_fd(params, [&](Tape& t) { return t.sum(t.exp(t.param(x))); });
  }
  SUBCASE("square") {
    ParamSet params;
    Parameter& x = params.add("x", random_tensor({6}, rng));
    check_against_fd(params, [&](Tape& t) { return t.sum(t.square(t.param(x))); });
  }
  SUBCASE("softplus") {
    ParamSet params;
    Parameter& x = params.add("x", random_tensor({6}, rng));
    check_against_fd(params, [&](Tape& t) { return t.sum(t.softplus(t.param(x))); });
  }
  SUBCASE("tanh") {
    ParamSet params;
    Parameter& x = params.add("x", random_tensor({6}, rng));
    check_against_fd(params, [&](Tape& t) { return t.sum(t.tanh(t.param(x))); });
  }
  SUBCASE("scale") {
    ParamSet params;
    Parameter& x = params.add("x", random_tensor({6}, rng));
    check_against_fd(params, [&](Tape& t) { return t.sum(t.scale(t.param(x), -1.7)); });
  }
  SUBCASE("concat and slice") {
    ParamSet params;
    Parameter& a = params.add("a", random_tensor({2, 3}, rng));
    Parameter& b = params.add("b", random_tensor({2, 2}, rng));
    check_against_fd(params, [&](Tape& t) {
      Var joined = t.concat(t.param(a), t.param(b));
      Var mid = t.slice(joined, 1, 4);
      return t.sum(t.square(mid));
    });
  }
}

TEST_CASE("three-layer random network gradient check") {
  Rng rng(11);
  ParamSet params;
  Parameter& w1 = params.add("w1", random_tensor({5, 6}, rng));
  Parameter& b1 = params.add("b1", random_tensor({6}, rng));
  Parameter& w2 = params.add("w2", random_tensor({6, 6}, rng));
  Parameter& b2 = params.add("b2", random_tensor({6}, rng));
  Parameter& w3 = params.add("w3", random_tensor({6, 2}, rng));
  Parameter& b3 = params.add("b3", random_tensor({2}, rng));
  Tensor input = random_tensor({4, 5}, rng);

  check_against_fd(params, [&](Tape& t) {
    Var h1 = t.softplus(t.broadcast_add(t.matmul(t.leaf(input), t.param(w1)), t.param(b1)));
    Var h2 = t.tanh(t.broadcast_add(t.matmul(h1, t.param(w2)), t.param(b2)));
    Var out = t.broadcast_add(t.matmul(h2, t.param(w3)), t.param(b3));
    return t.sum(t.square(out));
  });
}

TEST_CASE("gradients accumulate additively across node reuse") {
  ParamSet params;
  Parameter& x = params.add("x", Tensor::scalar(1.5));
  Tape tape;
  Var v = tape.param(x);
  tape.backward(tape.sum(tape.add(v, v)));
  CHECK(x.grad[0] == 2.0);
}

TEST_CASE("backward is linear over loss combinations") {
  Rng rng(13);
  ParamSet params;
  Parameter& x = params.add("x", random_tensor({4}, rng));
  double a = 1.7, b = -0.6;

  auto grad_of = [&](const std::function<Var(Tape&)>& build) {
    params.zero_grads();
    Tape t;
    t.backward(build(t));
    Tensor g = x.grad;
    return g;
  };

  auto l1 = [&](Tape& t) { return t.sum(t.square(t.param(x))); };
  auto l2 = [&](Tape& t) { return t.sum(t.softplus(t.param(x))); };
  Tensor g1 = grad_of(l1);
  Tensor g2 = grad_of(l2);
  Tensor gc = grad_of([&](Tape& t) {
    return t.add(t.scale(l1(t), a), t.scale(l2(t), b));
  });
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(gc[i] == doctest::Approx(a * g1[i] + b * g2[i]).epsilon(1e-12));
  }
}

TEST_CASE("two backward calls on one tape add parameter gradients") {
  ParamSet params;
  Parameter& x = params.add("x", Tensor::scalar(2.0));
  Tape tape;
  Var loss = tape.sum(tape.square(tape.param(x)));
  tape.backward(loss);
  tape.backward(loss);
  CHECK(x.grad[0] == 8.0);
}

TEST_CASE("forward replay is bitwise deterministic") {
  Rng rng(17);
  Tensor a = random_tensor({8, 8}, rng);
  Tensor b = random_tensor({8, 8}, rng);
  auto run = [&]() {
    Tape t;
    Var out = t.tanh(t.matmul(t.leaf(a), t.leaf(b)));
    Tensor v = out.value();
    return v;
  };
  Tensor v1 = run();
  Tensor v2 = run();
  CHECK(std::memcmp(v1.data(), v2.data(), v1.numel() * sizeof(double)) == 0);
}

TEST_CASE("shape errors name the offending shapes") {
  Tape tape;
  Var a = tape.leaf(Tensor({2, 3}));
  Var b = tape.leaf(Tensor({4, 5}));
  CHECK_THROWS_WITH_AS(tape.matmul(a, b),
                       doctest::Contains("2x3"), ShapeError);
  CHECK_THROWS_AS(tape.add(a, b), ShapeError);
  CHECK_THROWS_AS(tape.backward(a), ShapeError);
  CHECK_THROWS_AS(tape.slice(a, 2, 2), ShapeError);
  CHECK_THROWS_AS(tape.slice(a, 1, 9), ShapeError);
}

TEST_CASE("non-parameter leaves are untouched by backward") {
  ParamSet params;
  Parameter& x = params.add("x", Tensor::row({0.5, -1.0}));
  Tape tape;
  Var leaf = tape.leaf(Tensor::row({3, 4}));
  tape.backward(tape.sum(tape.mul(leaf, tape.param(x))));
  CHECK(x.grad[0] == 3.0);
  CHECK(x.grad[1] == 4.0);
  CHECK(leaf.value()[0] == 3.0);
  CHECK(leaf.value()[1] == 4.0);
}
