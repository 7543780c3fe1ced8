#pragma once

#include <vector>

#include "cmma/tape.hpp"
#include "cmma/tensor.hpp"

namespace cmma {

/// Diagonal Gaussian: covariance entries are exp(logvar), standard
/// deviations exp(logvar / 2).
struct GaussianDiag {
  Tensor mean;
  Tensor logvar;

  GaussianDiag(Tensor m, Tensor lv);
  std::size_t dim() const { return mean.numel(); }
};

enum class DensityMode {
  Exact,  // true log-density: -1/2 sum[(mean-x)^2/e^lv + lv + log 2pi]
  Paper,  // -[ sum (mean-x)^2/(2 e^lv) + sum e^lv ]
};

/// KL(q || p) for equal-dimension diagonal Gaussians, in the exact form
/// 1/2 sum[p.lv - q.lv + e^(q.lv - p.lv) + (q.mean - p.mean)^2/e^(p.lv) - 1],
/// which is 0 at q = p.
double kl_diag(const GaussianDiag& q, const GaussianDiag& p);

double gaussian_log_density(const Tensor& x, const GaussianDiag& g,
                            DensityMode mode = DensityMode::Exact);

/// z = mean + eps .* exp(logvar / 2)
Tensor reparam_sample(const GaussianDiag& g, const Tensor& eps);

/// log of the mixture (1/S) sum_s N(x; samples[s], sigma^2 I), via
/// log-sum-exp so that tiny sigma and large d stay in range.
double parzen_log_density(const Tensor& x, const std::vector<Tensor>& samples, double sigma);

/// Tape-side Gaussian whose mean and logvar are graph nodes, so bounds built
/// from these stay differentiable. mean and logvar may be rank 1 or a
/// (batch x d) matrix; all reductions below sum over everything.
struct GaussianVar {
  Var mean;
  Var logvar;
};

/// Summed KL over all rows and dimensions.
Var kl_diag(Tape& t, const GaussianVar& q, const GaussianVar& p);

/// Summed log-density of x (a leaf or node of the same shape as g.mean).
Var gaussian_log_density(Tape& t, Var x, const GaussianVar& g,
                         DensityMode mode = DensityMode::Exact);

Var reparam_sample(Tape& t, const GaussianVar& g, Var eps);

}  // namespace cmma
