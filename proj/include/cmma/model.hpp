#pragma once

#include <string>
#include <vector>

#include "cmma/gaussian.hpp"
#include "cmma/mlp.hpp"
#include "cmma/params.hpp"
#include "cmma/rng.hpp"

namespace cmma {

struct ModelConfig {
  std::size_t x_dim = 0;
  std::size_t y_dim = 0;
  std::size_t latent_dim = 8;
  std::vector<std::size_t> f_hidden{64};
  std::vector<std::size_t> h_hidden{256, 64};
  std::vector<std::size_t> g_hidden{64, 256};
  std::vector<std::size_t> h2_hidden{64};
  double lambda_y = 0.0;        // weight of the y-reconstruction term; 0 disables the y-decoder
  bool encoder_uses_y = true;   // false: posterior conditioned on x alone
  DensityMode recon_mode = DensityMode::Exact;
};

/// Per-example (or per-batch-total) bound terms. bound is computed as
/// recon - kl + lambda_y * y_term in exactly that floating-point order.
struct BoundBreakdown {
  double recon = 0.0;
  double kl = 0.0;
  double y_term = 0.0;
  double bound = 0.0;
};

/// Graph-side bound terms, each a scalar node summed over the batch.
struct BoundVars {
  Var recon;
  Var kl;
  Var y_term;  // zero leaf when the y-decoder is disabled
  Var bound;
};

/// Conditional multimodal autoencoder: prior net f (y -> z), encoder h
/// (x[,y] -> z), decoder g (z -> x), optional y-decoder h2 (z -> y).
class CmmaModel {
 public:
  /// Fresh model; a null rng zero-initializes every weight.
  CmmaModel(ModelConfig cfg, Rng* rng);

  const ModelConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  bool has_y_decoder() const { return cfg_.lambda_y > 0.0; }

  /// Mean training-set attribute vector, consumed by infer_attributes.
  void set_y_mean(Tensor m);
  const Tensor& y_mean() const { return y_mean_; }

  /// Batch bound graph. X is (B x m), Y is (B x A), eps is (B x J) noise for
  /// the posterior sample; eps_prior is (B x J) noise for the y-term's prior
  /// sample and may be empty when the y-decoder is disabled. All returned
  /// terms are sums over the batch.
  BoundVars bound_graph(Tape& t, const Tensor& X, const Tensor& Y, const Tensor& eps,
                        const Tensor& eps_prior) const;

  /// Single-example bound with caller-supplied noise.
  BoundBreakdown bound(const Tensor& x, const Tensor& y, const Tensor& eps,
                       const Tensor& eps_prior = Tensor()) const;

  /// decoder(prior(y) sampled with eps).mean; eps = 0 gives g_mu(f_mu(y)).
  Tensor generate(const Tensor& y, const Tensor& eps) const;

  /// decoder(encoder(x, y).mean).mean
  Tensor reconstruct(const Tensor& x, const Tensor& y) const;

  /// Latent arithmetic: z = encoder(x, y_new).mean
  ///                      + prior(y_new).mean - prior(y_orig).mean.
  Tensor modify(const Tensor& x, const Tensor& y_orig, const Tensor& y_new) const;

  struct InferredAttributes {
    Tensor raw;   // y-decoder mean
    Tensor bits;  // raw thresholded at 0.5
  };
  /// Encodes x against the stored mean attribute vector, then decodes
  /// attributes with h2. Requires the y-decoder.
  InferredAttributes infer_attributes(const Tensor& x) const;

  /// Plain forwards, batch-capable, for evaluation code.
  GaussianDiag prior(const Tensor& y) const { return f_.forward(y); }
  GaussianDiag posterior(const Tensor& x, const Tensor& y) const;
  GaussianDiag decode(const Tensor& z) const { return g_.forward(z); }
  GaussianDiag decode_y(const Tensor& z) const;

 private:
  ModelConfig cfg_;
  ParamSet params_;
  TwoHeadMlp f_, h_, g_, h2_;
  Tensor y_mean_;
};

/// Conditional VAE baseline: prior fixed at N(0, I), encoder (x,y) -> z,
/// decoder conditioned on y via concat(z, y).
class CvaeModel {
 public:
  CvaeModel(ModelConfig cfg, Rng* rng);

  const ModelConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  BoundVars bound_graph(Tape& t, const Tensor& X, const Tensor& Y, const Tensor& eps) const;
  BoundBreakdown bound(const Tensor& x, const Tensor& y, const Tensor& eps) const;

  /// Prior sample is eps itself; returns decoder(concat(eps, y)).mean.
  Tensor generate(const Tensor& y, const Tensor& eps) const;

  GaussianDiag posterior(const Tensor& x, const Tensor& y) const;
  /// z may be a vector or a batch; y rows must match.
  GaussianDiag decode(const Tensor& z, const Tensor& y) const;

 private:
  ModelConfig cfg_;
  ParamSet params_;
  TwoHeadMlp enc_, dec_;
};

/// Row-wise feature concatenation; both tensors rank 1 or both (B x *).
Tensor hconcat(const Tensor& a, const Tensor& b);

}  // namespace cmma
