#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cmma/data.hpp"
#include "cmma/model.hpp"
#include "cmma/train.hpp"

namespace cmma {

/// Quadrature rule for the weight e^{-u^2}: sum_i w_i f(u_i) approximates
/// integral e^{-u^2} f(u) du, exact for polynomials up to degree 2k - 1.
/// Nodes ascending; every call re-verifies the rule's low-order moments.
struct GaussHermite {
  std::vector<double> nodes;
  std::vector<double> weights;
};
GaussHermite gauss_hermite(std::size_t k);

struct BoundReport {
  double recon = 0.0;
  double kl = 0.0;
  double y_term = 0.0;
  double bound = 0.0;
  std::size_t count = 0;
};

/// Mean bound terms over a split with per-instance noise drawn from
/// Rng(eval_seed) in split order, so repeated calls are bitwise identical.
BoundReport test_bound(const LoadedModel& model, const MultimodalDataset& data,
                       const std::string& split, std::uint64_t eval_seed);

/// log p(x|y) = log integral p_dec(x|z) p_prior(z|y) dz by tensor-product
/// quadrature, accumulated in log space. The substitution
/// z = mean + sqrt(2) std * u is centered on the encoder's posterior, with
/// the prior-over-proposal ratio folded into the integrand, so the rule
/// resolves the sharply peaked decoder term of trained models; when the
/// posterior equals the prior this is plain quadrature under the prior.
/// Restricted to latent dimension <= 2 and the exact reconstruction
/// density; nodes >= 16.
double quadrature_loglik(const LoadedModel& model, const Tensor& x, const Tensor& y,
                         std::size_t nodes);

/// The x-part of the variational bound with the reconstruction expectation
/// integrated exactly over the posterior (same quadrature machinery), so
/// bound <= quadrature_loglik holds deterministically up to quadrature
/// error. y_term is reported as 0: the certified inequality is about
/// log p(x|y) alone.
BoundBreakdown exact_bound(const LoadedModel& model, const Tensor& x, const Tensor& y,
                           std::size_t nodes);

std::vector<double> default_sigma_grid();  // 20 log-spaced points in [0.01, 1]

struct ParzenConfig {
  std::size_t samples = 100;
  std::vector<double> sigma_grid = default_sigma_grid();
  std::uint64_t seed = 1;

  void validate() const;  // samples >= 2; grid nonempty, positive, ascending
};

struct ParzenReport {
  double sigma = 0.0;      // argmax of the mean validation score; ties -> smaller
  double val_mean = 0.0;   // mean validation log-likelihood at sigma
  double eval_mean = 0.0;  // mean over the requested split at sigma
  std::vector<double> per_instance;  // requested split, split order
};

/// Per instance: draw `samples` latents from the conditional prior, decode
/// their means, fit an isotropic kernel mixture, and score the true image.
/// Sigma is selected on the validation split, then the requested split is
/// scored at that sigma. Each instance's noise comes from its own stream
/// Rng(seed + 1 + instance id), so scores do not depend on split ordering.
ParzenReport parzen_eval(const LoadedModel& model, const MultimodalDataset& data,
                         const std::string& split, const ParzenConfig& cfg);

struct LatentMapRow {
  std::uint32_t id = 0;
  std::vector<double> prior_mean, prior_std, post_mean, post_std;
};

std::vector<LatentMapRow> latent_map(const LoadedModel& model, const MultimodalDataset& data,
                                     const std::string& split);
void write_latent_map_csv(const std::vector<LatentMapRow>& rows, const std::string& path);

struct GenerateMatchReport {
  std::array<double, kAttributeCount> accuracy{};  // oracle bit == requested bit
  std::size_t count = 0;
};

/// Noise-free generation for every attribute row of Ys, scored by the pixel
/// oracle against the requested bits. The model's image side is inferred
/// from its x dimension.
GenerateMatchReport attribute_match_generate(const LoadedModel& model, const Tensor& Ys);

struct ModifyMatchReport {
  std::size_t bit = 0;
  double flip_rate = 0.0;  // oracle agrees with the flipped target bit
  std::array<double, kAttributeCount> preserve{};  // other bits keep their
                                                   // original value; entry
                                                   // [bit] repeats flip_rate
  std::size_t count = 0;
};

/// For up to `limit` instances of the split: flip one attribute bit, apply
/// the latent shift edit, and score the edited image with the oracle.
ModifyMatchReport attribute_match_modify(const LoadedModel& model,
                                         const MultimodalDataset& data,
                                         const std::string& split, std::size_t bit,
                                         std::size_t limit);

void write_eval_summary(const std::string& path, const std::string& model_kind,
                        const std::string& split, const BoundReport& bound,
                        const ParzenReport& parzen, std::uint64_t train_seed,
                        std::uint64_t eval_seed);

}  // namespace cmma
