#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <vector>

#include "cmma/errors.hpp"
#include "cmma/gaussian.hpp"
#include "cmma/params.hpp"
#include "cmma/rng.hpp"
#include "cmma/tape.hpp"
#include "doctest.h"

using namespace cmma;

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;

GaussianDiag random_gaussian(std::size_t d, Rng& rng, double spread = 2.0) {
  Tensor m({d}), lv({d});
  for (std::size_t j = 0; j < d; ++j) {
    m[j] = rng.normal(0.0, spread);
    lv[j] = rng.normal(0.0, 1.0);
  }
  return GaussianDiag(std::move(m), std::move(lv));
}
}  // namespace

TEST_CASE("kl of a distribution with itself is zero") {
  Rng rng(101);
  for (int c = 0; c < 20; ++c) {
    GaussianDiag g = random_gaussian(4, rng);
    CHECK(std::abs(kl_diag(g, g)) <= 1e-12);
  }
}

TEST_CASE("kl closed-form values") {
  GaussianDiag q1(Tensor::row({1.0}), Tensor::row({0.0}));
  GaussianDiag p1(Tensor::row({0.0}), Tensor::row({0.0}));
  CHECK(kl_diag(q1, p1) == doctest::Approx(0.5).epsilon(1e-14));

  GaussianDiag q2(Tensor::row({0.0}), Tensor::row({1.0}));
  GaussianDiag p2(Tensor::row({0.0}), Tensor::row({0.0}));
  // 1/2 (0 - 1 + e - 1) = (e - 2)/2
  CHECK(kl_diag(q2, p2) == doctest::Approx(0.5 * (std::exp(1.0) - 2.0)).epsilon(1e-14));
  CHECK(kl_diag(q2, p2) == doctest::Approx(0.3591409).epsilon(1e-6));
}

TEST_CASE("kl is nonnegative over random draws and positive off the diagonal") {
  Rng rng(102);
  for (int c = 0; c < 1000; ++c) {
    GaussianDiag q = random_gaussian(3, rng);
    GaussianDiag p = random_gaussian(3, rng);
    double kl = kl_diag(q, p);
    CHECK(kl >= 0.0);
    CHECK(kl > 0.0);  // random q == p has probability zero
  }
}

TEST_CASE("kl agrees with a Monte-Carlo estimate of E_q[log q - log p]") {
  Rng rng(103);
  const std::size_t n = 1000000;
  for (int c = 0; c < 10; ++c) {
    GaussianDiag q = random_gaussian(3, rng, 1.0);
    GaussianDiag p = random_gaussian(3, rng, 1.0);
    double closed = kl_diag(q, p);

    double mean = 0.0, m2 = 0.0;
    Tensor eps({3});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < 3; ++j) eps[j] = rng.normal();
      Tensor z = reparam_sample(q, eps);
      double v = gaussian_log_density(z, q) - gaussian_log_density(z, p);
      double delta = v - mean;
      mean += delta / static_cast<double>(i + 1);
      m2 += delta * (v - mean);
    }
    double se = std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n));
    CHECK(std::abs(mean - closed) <= 3.0 * se);
  }
}

TEST_CASE("log-density closed-form values") {
  GaussianDiag std1(Tensor::row({0.0}), Tensor::row({0.0}));
  CHECK(gaussian_log_density(Tensor::row({0.0}), std1, DensityMode::Exact) ==
        doctest::Approx(-0.5 * kLog2Pi).epsilon(1e-14));
  CHECK(gaussian_log_density(Tensor::row({0.0}), std1, DensityMode::Paper) ==
        doctest::Approx(-1.0).epsilon(1e-14));

  double L = 0.7;
  GaussianDiag g(Tensor::row({1.3}), Tensor::row({L}));
  CHECK(gaussian_log_density(Tensor::row({1.3}), g, DensityMode::Exact) ==
        doctest::Approx(-0.5 * (L + kLog2Pi)).epsilon(1e-14));
}

TEST_CASE("reparam_sample closed-form values") {
  GaussianDiag g(Tensor::row({1.5, -2.0}), Tensor::row({0.3, -1.1}));
  Tensor z0 = reparam_sample(g, Tensor::row({0.0, 0.0}));
  CHECK(z0[0] == 1.5);
  CHECK(z0[1] == -2.0);

  GaussianDiag unit(Tensor::row({0.0, 0.0}), Tensor::row({0.0, 0.0}));
  Tensor z1 = reparam_sample(unit, Tensor::row({1.0, -1.0}));
  CHECK(z1[0] == 1.0);
  CHECK(z1[1] == -1.0);

  GaussianDiag g3(Tensor::row({2.0}), Tensor::row({2.0 * std::log(3.0)}));
  CHECK(reparam_sample(g3, Tensor::row({1.0}))[0] == doctest::Approx(5.0).epsilon(1e-14));
}

TEST_CASE("reparam_sample draws have the declared mean and variance") {
  Rng rng(104);
  const std::size_t n = 100000;
  GaussianDiag g(Tensor::row({0.8}), Tensor::row({-0.6}));
  double var_true = std::exp(-0.6);
  double mean = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double z = reparam_sample(g, Tensor::row({rng.normal()}))[0];
    double delta = z - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (z - mean);
  }
  double var = m2 / static_cast<double>(n - 1);
  double se_mean = std::sqrt(var_true / static_cast<double>(n));
  double se_var = var_true * std::sqrt(2.0 / static_cast<double>(n - 1));
  CHECK(std::abs(mean - 0.8) <= 4.0 * se_mean);
  CHECK(std::abs(var - var_true) <= 4.0 * se_var);
}

TEST_CASE("parzen closed-form values") {
  double sigma = 0.7;
  Tensor x = Tensor::row({0.3, -0.2, 1.1});
  double at_center = parzen_log_density(x, {x}, sigma);
  CHECK(at_center == doctest::Approx(-1.5 * (kLog2Pi + 2.0 * std::log(sigma))).epsilon(1e-12));
  CHECK(parzen_log_density(x, {x, x}, sigma) == doctest::Approx(at_center).epsilon(1e-12));

  double two_kernel =
      parzen_log_density(Tensor::row({0.0}), {Tensor::row({-1.0}), Tensor::row({1.0})}, 1.0);
  CHECK(two_kernel == doctest::Approx(-0.5 - 0.5 * kLog2Pi).epsilon(1e-12));

  // Naive non-logsumexp evaluation as an independent check.
  double naive = std::log(0.5 * (std::exp(-0.5) + std::exp(-0.5)) / std::sqrt(2.0 * 3.14159265358979323846));
  CHECK(two_kernel == doctest::Approx(naive).epsilon(1e-12));
}

TEST_CASE("parzen stays finite for tiny sigma and large dimension") {
  std::size_t d = 10000;
  Tensor x = Tensor::full({d}, 0.1);
  Tensor s1 = Tensor::full({d}, 0.1);
  Tensor s2 = Tensor::full({d}, 0.9);
  double v = parzen_log_density(x, {s1, s2}, 1e-6);
  CHECK(std::isfinite(v));
}

TEST_CASE("parzen is invariant to sample order and joint translation") {
  Rng rng(105);
  std::vector<Tensor> samples;
  for (int s = 0; s < 7; ++s) samples.push_back(rng.normal_tensor({4}));
  Tensor x = rng.normal_tensor({4});
  double base = parzen_log_density(x, samples, 0.5);

  std::vector<Tensor> reversed(samples.rbegin(), samples.rend());
  CHECK(parzen_log_density(x, reversed, 0.5) == doctest::Approx(base).epsilon(1e-15));

  Tensor xt = x;
  std::vector<Tensor> shifted = samples;
  for (std::size_t j = 0; j < 4; ++j) xt[j] += 3.25;
  for (auto& s : shifted)
    for (std::size_t j = 0; j < 4; ++j) s[j] += 3.25;
  CHECK(std::abs(parzen_log_density(xt, shifted, 0.5) - base) <= 1e-9);
}

TEST_CASE("rejects malformed inputs") {
  GaussianDiag g(Tensor::row({0.0, 0.0}), Tensor::row({0.0, 0.0}));
  CHECK_THROWS_AS(kl_diag(g, GaussianDiag(Tensor::row({0.0}), Tensor::row({0.0}))), ShapeError);
  CHECK_THROWS_AS(gaussian_log_density(Tensor::row({0.0}), g), ShapeError);
  CHECK_THROWS_AS(reparam_sample(g, Tensor::row({0.0})), ShapeError);
  CHECK_THROWS_AS(parzen_log_density(Tensor::row({0.0}), {}, 1.0), ValueError);
  CHECK_THROWS_AS(parzen_log_density(Tensor::row({0.0}), {Tensor::row({0.0})}, 0.0), ValueError);
}

TEST_CASE("tape forms match the plain forms and pass the gradient check") {
  Rng rng(106);
  std::size_t d = 3;
  ParamSet params;
  Parameter& qm = params.add("qm", rng.normal_tensor({d}));
  Parameter& qlv = params.add("qlv", rng.normal_tensor({d}, 0.0, 0.5));
  Parameter& pm = params.add("pm", rng.normal_tensor({d}));
  Parameter& plv = params.add("plv", rng.normal_tensor({d}, 0.0, 0.5));
  Tensor x = rng.normal_tensor({d});
  Tensor eps = rng.normal_tensor({d});

  auto build = [&](Tape& t) {
    GaussianVar q{t.param(qm), t.param(qlv)};
    GaussianVar p{t.param(pm), t.param(plv)};
    Var kl = kl_diag(t, q, p);
    Var z = reparam_sample(t, q, t.leaf(eps));
    GaussianVar out{z, t.param(plv)};
    Var ld_exact = gaussian_log_density(t, t.leaf(x), out, DensityMode::Exact);
    Var ld_paper = gaussian_log_density(t, t.leaf(x), out, DensityMode::Paper);
    return t.add(kl, t.add(ld_exact, t.scale(ld_paper, 0.5)));
  };

  // Values agree with the plain-tensor computation.
  Tape t;
  GaussianVar q{t.leaf(qm.value), t.leaf(qlv.value)};
  GaussianVar p{t.leaf(pm.value), t.leaf(plv.value)};
  GaussianDiag qd(qm.value, qlv.value), pd(pm.value, plv.value);
  CHECK(kl_diag(t, q, p).scalar() == doctest::Approx(kl_diag(qd, pd)).epsilon(1e-13));
  Var z = reparam_sample(t, q, t.leaf(eps));
  Tensor z_plain = reparam_sample(qd, eps);
  for (std::size_t j = 0; j < d; ++j) CHECK(z.value()[j] == z_plain[j]);
  GaussianVar gx{t.leaf(qm.value), t.leaf(qlv.value)};
  CHECK(gaussian_log_density(t, t.leaf(x), gx, DensityMode::Exact).scalar() ==
        doctest::Approx(gaussian_log_density(x, qd, DensityMode::Exact)).epsilon(1e-13));
  CHECK(gaussian_log_density(t, t.leaf(x), gx, DensityMode::Paper).scalar() ==
        doctest::Approx(gaussian_log_density(x, qd, DensityMode::Paper)).epsilon(1e-13));

  // Gradient check of the combined expression.
  params.zero_grads();
  Tape tg;
  tg.backward(build(tg));
  auto loss = [&]() {
    Tape tt;
    return build(tt).scalar();
  };
  auto fd = finite_difference_gradient(loss, params, 1e-5);
  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi)
    for (std::size_t j = 0; j < d; ++j)
      worst = std::max(worst, gradient_rel_error(params[pi].grad[j], fd[pi][j]));
  CHECK(worst <= 1e-4);
}

TEST_CASE("batched tape forms reduce over rows") {
  Rng rng(107);
  Tensor qm = rng.normal_tensor({3, 2});
  Tensor qlv = rng.normal_tensor({3, 2}, 0.0, 0.5);
  Tensor pm = rng.normal_tensor({3, 2});
  Tensor plv = rng.normal_tensor({3, 2}, 0.0, 0.5);

  double expect = 0.0;
  for (std::size_t r = 0; r < 3; ++r) {
    expect += kl_diag(GaussianDiag(qm.row_at(r), qlv.row_at(r)),
                      GaussianDiag(pm.row_at(r), plv.row_at(r)));
  }
  Tape t;
  GaussianVar q{t.leaf(qm), t.leaf(qlv)};
  GaussianVar p{t.leaf(pm), t.leaf(plv)};
  CHECK(kl_diag(t, q, p).scalar() == doctest::Approx(expect).epsilon(1e-13));
}
