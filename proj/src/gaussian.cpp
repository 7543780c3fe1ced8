#include "cmma/gaussian.hpp"

#include <cmath>
#include <limits>

#include "cmma/errors.hpp"

namespace cmma {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;

void require_same_dim(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": dimension mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
  }
}
}  // namespace

GaussianDiag::GaussianDiag(Tensor m, Tensor lv) : mean(std::move(m)), logvar(std::move(lv)) {
  require_same_dim(mean, logvar, "GaussianDiag");
}

double kl_diag(const GaussianDiag& q, const GaussianDiag& p) {
  require_same_dim(q.mean, p.mean, "kl_diag");
  double acc = 0.0;
  for (std::size_t j = 0; j < q.dim(); ++j) {
    double dm = q.mean[j] - p.mean[j];
    acc += p.logvar[j] - q.logvar[j] + std::exp(q.logvar[j] - p.logvar[j]) +
           dm * dm * std::exp(-p.logvar[j]) - 1.0;
  }
  return 0.5 * acc;
}

double gaussian_log_density(const Tensor& x, const GaussianDiag& g, DensityMode mode) {
  require_same_dim(x, g.mean, "gaussian_log_density");
  if (mode == DensityMode::Exact) {
    double acc = 0.0;
    for (std::size_t j = 0; j < x.numel(); ++j) {
      double d = g.mean[j] - x[j];
      acc += d * d * std::exp(-g.logvar[j]) + g.logvar[j] + kLog2Pi;
    }
    return -0.5 * acc;
  }
  double quad = 0.0, vol = 0.0;
  for (std::size_t j = 0; j < x.numel(); ++j) {
    double d = g.mean[j] - x[j];
    quad += d * d * std::exp(-g.logvar[j]);
    vol += std::exp(g.logvar[j]);
  }
  return -(0.5 * quad + vol);
}

Tensor reparam_sample(const GaussianDiag& g, const Tensor& eps) {
  require_same_dim(eps, g.mean, "reparam_sample");
  Tensor z(g.mean.shape());
  for (std::size_t j = 0; j < z.numel(); ++j) {
    z[j] = g.mean[j] + eps[j] * std::exp(0.5 * g.logvar[j]);
  }
  return z;
}

double parzen_log_density(const Tensor& x, const std::vector<Tensor>& samples, double sigma) {
  if (samples.empty()) throw ValueError("parzen_log_density: empty sample set");
  if (!(sigma > 0.0)) throw ValueError("parzen_log_density: sigma must be positive");
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  const std::size_t d = x.numel();

  double max_e = -std::numeric_limits<double>::infinity();
  std::vector<double> exponents(samples.size());
  for (std::size_t s = 0; s < samples.size(); ++s) {
    require_same_dim(samples[s], x, "parzen_log_density");
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      double diff = x[j] - samples[s][j];
      sq += diff * diff;
    }
    exponents[s] = -sq * inv2s2;
    max_e = std::max(max_e, exponents[s]);
  }
  double acc = 0.0;
  for (double e : exponents) acc += std::exp(e - max_e);
  return max_e + std::log(acc) - std::log(static_cast<double>(samples.size())) -
         0.5 * static_cast<double>(d) * (kLog2Pi + 2.0 * std::log(sigma));
}

Var kl_diag(Tape& t, const GaussianVar& q, const GaussianVar& p) {
  require_same_dim(q.mean.value(), p.mean.value(), "kl_diag");
  Var lv_diff = t.sub(q.logvar, p.logvar);
  Var ratio = t.exp(lv_diff);
  Var quad = t.mul(t.square(t.sub(q.mean, p.mean)), t.exp(t.scale(p.logvar, -1.0)));
  Var terms = t.add(t.add(t.scale(lv_diff, -1.0), ratio), quad);
  Var centered = t.sub(terms, t.leaf(Tensor::ones(q.mean.value().shape())));
  return t.scale(t.sum(centered), 0.5);
}

Var gaussian_log_density(Tape& t, Var x, const GaussianVar& g, DensityMode mode) {
  require_same_dim(x.value(), g.mean.value(), "gaussian_log_density");
  Var quad = t.mul(t.square(t.sub(g.mean, x)), t.exp(t.scale(g.logvar, -1.0)));
  if (mode == DensityMode::Exact) {
    Var consts = t.leaf(Tensor::full(x.value().shape(), kLog2Pi));
    return t.scale(t.sum(t.add(t.add(quad, g.logvar), consts)), -0.5);
  }
  Var half_quad = t.scale(t.sum(quad), 0.5);
  Var vol = t.sum(t.exp(g.logvar));
  return t.scale(t.add(half_quad, vol), -1.0);
}

Var reparam_sample(Tape& t, const GaussianVar& g, Var eps) {
  require_same_dim(eps.value(), g.mean.value(), "reparam_sample");
  return t.add(g.mean, t.mul(eps, t.exp(t.scale(g.logvar, 0.5))));
}

}  // namespace cmma
