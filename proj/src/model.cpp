#include "cmma/model.hpp"

#include <cstring>

#include "cmma/errors.hpp"

namespace cmma {

Tensor hconcat(const Tensor& a, const Tensor& b) {
  if (a.rank() == 1 && b.rank() == 1) {
    Tensor out({a.numel() + b.numel()});
    std::memcpy(out.data(), a.data(), a.numel() * sizeof(double));
    std::memcpy(out.data() + a.numel(), b.data(), b.numel() * sizeof(double));
    return out;
  }
  if (a.rank() == 2 && b.rank() == 2 && a.rows() == b.rows()) {
    std::size_t r = a.rows(), ca = a.cols(), cb = b.cols();
    Tensor out({r, ca + cb});
    for (std::size_t i = 0; i < r; ++i) {
      std::memcpy(out.data() + i * (ca + cb), a.data() + i * ca, ca * sizeof(double));
      std::memcpy(out.data() + i * (ca + cb) + ca, b.data() + i * cb, cb * sizeof(double));
    }
    return out;
  }
  throw ShapeError("hconcat: incompatible shapes " + a.shape_str() + " and " + b.shape_str());
}

namespace {

Tensor as_batch(const Tensor& t, std::size_t dim, const char* what) {
  if (t.rank() == 1 && t.numel() == dim) return t.reshaped({1, dim});
  if (t.rank() == 2 && t.cols() == dim) return t;
  throw ShapeError(std::string(what) + ": expected length " + std::to_string(dim) +
                   " or batch x " + std::to_string(dim) + ", got " + t.shape_str());
}

void check_rows_match(const Tensor& a, const Tensor& b, const char* what) {
  if (a.rows() != b.rows()) {
    throw ShapeError(std::string(what) + ": row mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
  }
}

}  // namespace

CmmaModel::CmmaModel(ModelConfig cfg, Rng* rng) : cfg_(std::move(cfg)) {
  if (cfg_.x_dim == 0 || cfg_.y_dim == 0 || cfg_.latent_dim == 0) {
    throw ValueError("CmmaModel: x_dim, y_dim, latent_dim must be positive");
  }
  std::size_t m = cfg_.x_dim, a = cfg_.y_dim, j = cfg_.latent_dim;
  f_ = TwoHeadMlp::create(params_, "f", {a, cfg_.f_hidden, j}, rng);
  std::size_t enc_in = cfg_.encoder_uses_y ? m + a : m;
  h_ = TwoHeadMlp::create(params_, "h", {enc_in, cfg_.h_hidden, j}, rng);
  g_ = TwoHeadMlp::create(params_, "g", {j, cfg_.g_hidden, m}, rng);
  if (has_y_decoder()) {
    h2_ = TwoHeadMlp::create(params_, "h2", {j, cfg_.h2_hidden, a}, rng);
  }
  y_mean_ = Tensor({a});
}

void CmmaModel::set_y_mean(Tensor m) {
  if (m.numel() != cfg_.y_dim) {
    throw ShapeError("set_y_mean: expected length " + std::to_string(cfg_.y_dim) + ", got " +
                     m.shape_str());
  }
  y_mean_ = std::move(m).reshaped({cfg_.y_dim});
}

GaussianDiag CmmaModel::posterior(const Tensor& x, const Tensor& y) const {
  if (!cfg_.encoder_uses_y) return h_.forward(x);
  return h_.forward(hconcat(x, y));
}

GaussianDiag CmmaModel::decode_y(const Tensor& z) const {
  if (!has_y_decoder()) throw ValueError("attribute inference requires the y-decoder");
  return h2_.forward(z);
}

BoundVars CmmaModel::bound_graph(Tape& t, const Tensor& X, const Tensor& Y, const Tensor& eps,
                                 const Tensor& eps_prior) const {
  Tensor xb = as_batch(X, cfg_.x_dim, "bound: x");
  Tensor yb = as_batch(Y, cfg_.y_dim, "bound: y");
  Tensor eb = as_batch(eps, cfg_.latent_dim, "bound: eps");
  check_rows_match(xb, yb, "bound: x vs y");
  check_rows_match(xb, eb, "bound: x vs eps");

  Var x_leaf = t.leaf(xb);
  Var y_leaf = t.leaf(yb);
  GaussianVar q = h_.forward(t, cfg_.encoder_uses_y ? t.leaf(hconcat(xb, yb)) : x_leaf);
  GaussianVar p = f_.forward(t, y_leaf);
  Var z = reparam_sample(t, q, t.leaf(eb));
  GaussianVar out = g_.forward(t, z);

  BoundVars bv;
  bv.recon = gaussian_log_density(t, x_leaf, out, cfg_.recon_mode);
  bv.kl = kl_diag(t, q, p);
  if (has_y_decoder()) {
    Tensor epb = as_batch(eps_prior, cfg_.latent_dim, "bound: eps_prior");
    check_rows_match(xb, epb, "bound: x vs eps_prior");
    Var zp = reparam_sample(t, p, t.leaf(epb));
    GaussianVar yout = h2_.forward(t, zp);
    bv.y_term = gaussian_log_density(t, y_leaf, yout, DensityMode::Exact);
  } else {
    bv.y_term = t.leaf(Tensor::scalar(0.0));
  }
  bv.bound = t.add(t.sub(bv.recon, bv.kl), t.scale(bv.y_term, cfg_.lambda_y));
  return bv;
}

BoundBreakdown CmmaModel::bound(const Tensor& x, const Tensor& y, const Tensor& eps,
                                const Tensor& eps_prior) const {
  Tape t;
  BoundVars bv = bound_graph(t, x, y, eps, eps_prior);
  return BoundBreakdown{bv.recon.scalar(), bv.kl.scalar(), bv.y_term.scalar(),
                        bv.bound.scalar()};
}

Tensor CmmaModel::generate(const Tensor& y, const Tensor& eps) const {
  GaussianDiag p = prior(y);
  return decode(reparam_sample(p, eps)).mean;
}

Tensor CmmaModel::reconstruct(const Tensor& x, const Tensor& y) const {
  return decode(posterior(x, y).mean).mean;
}

Tensor CmmaModel::modify(const Tensor& x, const Tensor& y_orig, const Tensor& y_new) const {
  Tensor z = posterior(x, y_new).mean;
  Tensor d_new = prior(y_new).mean;
  Tensor d_old = prior(y_orig).mean;
  for (std::size_t j = 0; j < z.numel(); ++j) z[j] += d_new[j] - d_old[j];
  return decode(z).mean;
}

CmmaModel::InferredAttributes CmmaModel::infer_attributes(const Tensor& x) const {
  if (!has_y_decoder()) throw ValueError("attribute inference requires the y-decoder");
  Tensor z = posterior(x, y_mean_).mean;
  Tensor raw = h2_.forward(z).mean;
  Tensor bits(raw.shape());
  for (std::size_t j = 0; j < raw.numel(); ++j) bits[j] = raw[j] >= 0.5 ? 1.0 : 0.0;
  return {std::move(raw), std::move(bits)};
}

CvaeModel::CvaeModel(ModelConfig cfg, Rng* rng) : cfg_(std::move(cfg)) {
  if (cfg_.x_dim == 0 || cfg_.y_dim == 0 || cfg_.latent_dim == 0) {
    throw ValueError("CvaeModel: x_dim, y_dim, latent_dim must be positive");
  }
  std::size_t m = cfg_.x_dim, a = cfg_.y_dim, j = cfg_.latent_dim;
  enc_ = TwoHeadMlp::create(params_, "enc", {m + a, cfg_.h_hidden, j}, rng);
  dec_ = TwoHeadMlp::create(params_, "dec", {j + a, cfg_.g_hidden, m}, rng);
}

GaussianDiag CvaeModel::posterior(const Tensor& x, const Tensor& y) const {
  return enc_.forward(hconcat(x, y));
}

GaussianDiag CvaeModel::decode(const Tensor& z, const Tensor& y) const {
  return dec_.forward(hconcat(z, y));
}

BoundVars CvaeModel::bound_graph(Tape& t, const Tensor& X, const Tensor& Y,
                                 const Tensor& eps) const {
  Tensor xb = as_batch(X, cfg_.x_dim, "bound: x");
  Tensor yb = as_batch(Y, cfg_.y_dim, "bound: y");
  Tensor eb = as_batch(eps, cfg_.latent_dim, "bound: eps");
  check_rows_match(xb, yb, "bound: x vs y");
  check_rows_match(xb, eb, "bound: x vs eps");

  Var x_leaf = t.leaf(xb);
  Var y_leaf = t.leaf(yb);
  GaussianVar q = enc_.forward(t, t.leaf(hconcat(xb, yb)));
  GaussianVar p{t.leaf(Tensor({xb.rows(), cfg_.latent_dim})),
                t.leaf(Tensor({xb.rows(), cfg_.latent_dim}))};
  Var z = reparam_sample(t, q, t.leaf(eb));
  GaussianVar out = dec_.forward(t, t.concat(z, y_leaf));

  BoundVars bv;
  bv.recon = gaussian_log_density(t, x_leaf, out, cfg_.recon_mode);
  bv.kl = kl_diag(t, q, p);
  bv.y_term = t.leaf(Tensor::scalar(0.0));
  bv.bound = t.add(t.sub(bv.recon, bv.kl), t.scale(bv.y_term, 0.0));
  return bv;
}

BoundBreakdown CvaeModel::bound(const Tensor& x, const Tensor& y, const Tensor& eps) const {
  Tape t;
  BoundVars bv = bound_graph(t, x, y, eps);
  return BoundBreakdown{bv.recon.scalar(), bv.kl.scalar(), bv.y_term.scalar(),
                        bv.bound.scalar()};
}

Tensor CvaeModel::generate(const Tensor& y, const Tensor& eps) const {
  return decode(eps, y).mean;
}

}  // namespace cmma
