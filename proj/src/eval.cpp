#include "cmma/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include "cmma/errors.hpp"
#include "cmma/gaussian.hpp"
#include "cmma/rng.hpp"
#include "json.hpp"

namespace cmma {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kLogPi = 1.1447298858494001741;
constexpr std::size_t kDecodeChunk = 4096;
constexpr std::size_t kEvalBatch = 100;

}  // namespace

GaussHermite gauss_hermite(std::size_t n) {
  if (n < 1) throw ValueError("quadrature rule needs at least one node");
  GaussHermite rule;
  rule.nodes.assign(n, 0.0);
  rule.weights.assign(n, 0.0);
  const double pim4 = 0.75112554446494248286;  // pi^{-1/4}
  const std::size_t half = (n + 1) / 2;
  double z = 0.0;
  for (std::size_t i = 0; i < half; ++i) {
    // Seed each root from its neighbors, largest first, then polish with
    // Newton on the orthonormal recurrence (derivative sqrt(2n) * p_{n-1}).
    if (i == 0) {
      z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -1.0 / 6.0);
    } else if (i == 1) {
      z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
    } else if (i == 2) {
      z = 1.86 * z - 0.86 * rule.nodes[0];
    } else if (i == 3) {
      z = 1.91 * z - 0.91 * rule.nodes[1];
    } else {
      z = 2.0 * z - rule.nodes[i - 2];
    }
    double pp = 0.0;
    for (int iter = 0; iter < 200; ++iter) {
      double p1 = pim4, p2 = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / (j + 1.0)) * p2 -
             std::sqrt(static_cast<double>(j) / (j + 1.0)) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      double dz = p1 / pp;
      z -= dz;
      if (std::abs(dz) < 1e-14 * std::max(1.0, std::abs(z))) break;
    }
    rule.nodes[i] = z;
    rule.nodes[n - 1 - i] = -z;
    rule.weights[i] = 2.0 / (pp * pp);
    rule.weights[n - 1 - i] = rule.weights[i];
  }
  std::reverse(rule.nodes.begin(), rule.nodes.end());
  std::reverse(rule.weights.begin(), rule.weights.end());

  const double root_pi = std::sqrt(3.14159265358979323846);
  double m0 = 0.0, m2 = 0.0, m4 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    m0 += rule.weights[i];
    m2 += rule.weights[i] * rule.nodes[i] * rule.nodes[i];
    m4 += rule.weights[i] * rule.nodes[i] * rule.nodes[i] * rule.nodes[i] * rule.nodes[i];
  }
  if (std::abs(m0 - root_pi) > 1e-12 * root_pi ||
      (n >= 2 && std::abs(m2 - root_pi / 2.0) > 1e-12 * root_pi) ||
      (n >= 3 && std::abs(m4 - 0.75 * root_pi) > 1e-11 * root_pi)) {
    throw Error("quadrature rule failed its moment self-check at " + std::to_string(n) +
                " nodes");
  }
  return rule;
}

namespace {

Tensor gather_rows(const Tensor& src, const std::vector<std::uint32_t>& idx, std::size_t lo,
                   std::size_t hi) {
  std::size_t cols = src.cols();
  Tensor out({hi - lo, cols});
  for (std::size_t i = lo; i < hi; ++i) {
    std::memcpy(out.data() + (i - lo) * cols, src.data() + idx[i] * cols,
                cols * sizeof(double));
  }
  return out;
}

void check_dims(const LoadedModel& model, const MultimodalDataset& data) {
  const ModelConfig& mc = model.config.model;
  if (data.m() != mc.x_dim) {
    throw ShapeError("dataset images have " + std::to_string(data.m()) +
                     " pixels, the model expects " + std::to_string(mc.x_dim));
  }
  if (data.a() != mc.y_dim) {
    throw ShapeError("dataset attributes have " + std::to_string(data.a()) +
                     " bits, the model expects " + std::to_string(mc.y_dim));
  }
}

const CmmaModel* cmma_of(const LoadedModel& m) { return m.cmma.get(); }

// Exact log N(x; mean_row, exp(lv_row)) for one row of a batched decode.
double row_log_density(const double* mean, const double* lv, const Tensor& x) {
  double acc = 0.0;
  for (std::size_t t = 0; t < x.numel(); ++t) {
    double d = mean[t] - x[t];
    acc += d * d * std::exp(-lv[t]) + lv[t] + kLog2Pi;
  }
  return -0.5 * acc;
}

// Decoder log-densities of x at every latent row of Z, chunked so decode
// batches stay bounded.
std::vector<double> decoder_log_densities(const LoadedModel& model, const Tensor& x,
                                          const Tensor& y, const Tensor& Z) {
  std::vector<double> out;
  out.reserve(Z.rows());
  for (std::size_t lo = 0; lo < Z.rows(); lo += kDecodeChunk) {
    std::size_t hi = std::min(lo + kDecodeChunk, Z.rows());
    Tensor chunk({hi - lo, Z.cols()});
    std::memcpy(chunk.data(), Z.data() + lo * Z.cols(),
                (hi - lo) * Z.cols() * sizeof(double));
    GaussianDiag px = [&] {
      if (const CmmaModel* m = cmma_of(model)) return m->decode(chunk);
      Tensor yrep({hi - lo, y.numel()});
      for (std::size_t r = 0; r < hi - lo; ++r) {
        std::memcpy(yrep.data() + r * y.numel(), y.data(), y.numel() * sizeof(double));
      }
      return model.cvae->decode(chunk, yrep);
    }();
    for (std::size_t r = 0; r < hi - lo; ++r) {
      out.push_back(row_log_density(px.mean.data() + r * x.numel(),
                                    px.logvar.data() + r * x.numel(), x));
    }
  }
  return out;
}

GaussianDiag conditional_prior(const LoadedModel& model, const Tensor& y) {
  if (const CmmaModel* m = cmma_of(model)) return m->prior(y);
  std::size_t j = model.config.model.latent_dim;
  return GaussianDiag(Tensor::zeros({j}), Tensor::zeros({j}));
}

GaussianDiag model_posterior(const LoadedModel& model, const Tensor& x, const Tensor& y) {
  if (const CmmaModel* m = cmma_of(model)) return m->posterior(x, y);
  return model.cvae->posterior(x, y);
}

// Tensor-product latent nodes z = mean + sqrt(2) * std (.) u and the log of
// each node's weight product.
void latent_nodes(const GaussianDiag& g, const GaussHermite& rule, Tensor& Z,
                  std::vector<double>& log_w) {
  std::size_t j = g.dim();
  std::size_t k = rule.nodes.size();
  std::vector<double> scale(j), logw1(k);
  for (std::size_t d = 0; d < j; ++d) {
    scale[d] = std::sqrt(2.0) * std::exp(0.5 * g.logvar[d]);
  }
  for (std::size_t i = 0; i < k; ++i) logw1[i] = std::log(rule.weights[i]);
  if (j == 1) {
    Z = Tensor({k, 1});
    log_w.assign(k, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
      Z.at(i, 0) = g.mean[0] + scale[0] * rule.nodes[i];
      log_w[i] = logw1[i];
    }
    return;
  }
  Z = Tensor({k * k, 2});
  log_w.assign(k * k, 0.0);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = 0; b < k; ++b) {
      std::size_t r = a * k + b;
      Z.at(r, 0) = g.mean[0] + scale[0] * rule.nodes[a];
      Z.at(r, 1) = g.mean[1] + scale[1] * rule.nodes[b];
      log_w[r] = logw1[a] + logw1[b];
    }
  }
}

void check_oracle_pre(const LoadedModel& model, const Tensor& x, const Tensor& y,
                      std::size_t nodes) {
  const ModelConfig& mc = model.config.model;
  if (mc.latent_dim > 2) throw ValueError("oracle restricted to J ≤ 2");
  if (nodes < 16) throw ValueError("the likelihood oracle needs at least 16 nodes");
  if (mc.recon_mode != DensityMode::Exact) {
    throw ValueError("the likelihood oracle requires the exact reconstruction density");
  }
  if (x.numel() != mc.x_dim) {
    throw ShapeError("x has " + std::to_string(x.numel()) + " entries, the model expects " +
                     std::to_string(mc.x_dim));
  }
  if (y.numel() != mc.y_dim) {
    throw ShapeError("y has " + std::to_string(y.numel()) + " entries, the model expects " +
                     std::to_string(mc.y_dim));
  }
}

}  // namespace

BoundReport test_bound(const LoadedModel& model, const MultimodalDataset& data,
                       const std::string& split, std::uint64_t eval_seed) {
  check_dims(model, data);
  const std::vector<std::uint32_t>& idx = data.split(split);
  if (idx.empty()) throw ValueError("split '" + split + "' is empty");

  std::size_t j = model.config.model.latent_dim;
  const CmmaModel* cm = cmma_of(model);
  Rng rng(eval_seed);
  BoundReport report;
  for (std::size_t lo = 0; lo < idx.size(); lo += kEvalBatch) {
    std::size_t hi = std::min(lo + kEvalBatch, idx.size());
    Tensor X = gather_rows(data.X, idx, lo, hi);
    Tensor Y = gather_rows(data.Y, idx, lo, hi);
    Tensor eps = rng.normal_tensor({hi - lo, j});
    Tape t;
    BoundVars bv = [&] {
      if (cm) {
        Tensor eps_prior;
        if (cm->has_y_decoder()) eps_prior = rng.normal_tensor({hi - lo, j});
        return cm->bound_graph(t, X, Y, eps, eps_prior);
      }
      return model.cvae->bound_graph(t, X, Y, eps);
    }();
    report.recon += bv.recon.scalar();
    report.kl += bv.kl.scalar();
    report.y_term += bv.y_term.scalar();
    report.bound += bv.bound.scalar();
  }
  report.count = idx.size();
  double inv = 1.0 / static_cast<double>(idx.size());
  report.recon *= inv;
  report.kl *= inv;
  report.y_term *= inv;
  report.bound *= inv;
  return report;
}

// Exact diagonal-Gaussian log-density of one latent row.
static double diag_log_density(const double* z, const GaussianDiag& g) {
  double acc = 0.0;
  for (std::size_t d = 0; d < g.dim(); ++d) {
    double diff = z[d] - g.mean[d];
    acc += diff * diff * std::exp(-g.logvar[d]) + g.logvar[d] + kLog2Pi;
  }
  return -0.5 * acc;
}

double quadrature_loglik(const LoadedModel& model, const Tensor& x, const Tensor& y,
                         std::size_t nodes) {
  check_oracle_pre(model, x, y, nodes);
  GaussHermite rule = gauss_hermite(nodes);
  GaussianDiag prior = conditional_prior(model, y);
  std::size_t j = model.config.model.latent_dim;

  // The p_dec(x|z) p_prior(z|y) product of a trained model is sharply
  // peaked, so a rule anchored to any fixed proposal can miss it. Quadrature
  // runs under a proposal density instead (the integrand carries the
  // target-over-proposal ratio, which leaves the integral unchanged),
  // starting at the encoder's posterior and moment-matching the proposal to
  // the integrand itself over a few passes; the result is read off the final
  // pass. When the integrand already is the proposal, every pass is exact.
  GaussianDiag proposal = model_posterior(model, x, y);
  double result = 0.0;
  for (int pass = 0; pass < 3; ++pass) {
    Tensor Z;
    std::vector<double> log_w;
    latent_nodes(proposal, rule, Z, log_w);
    std::vector<double> log_p = decoder_log_densities(model, x, y, Z);

    std::vector<double> terms(log_p.size());
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < log_p.size(); ++i) {
      const double* z = Z.data() + i * j;
      terms[i] =
          log_w[i] + log_p[i] + diag_log_density(z, prior) - diag_log_density(z, proposal);
      peak = std::max(peak, terms[i]);
    }
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - peak);
    result = peak + std::log(acc) - 0.5 * static_cast<double>(j) * kLogPi;
    if (pass == 2) break;

    // Self-normalized integrand moments become the next proposal. Variances
    // are floored against collapse and slightly inflated: a too-wide
    // proposal only slows convergence, a too-narrow one breaks it.
    std::vector<double> mean(j, 0.0), var(j, 0.0);
    for (std::size_t i = 0; i < terms.size(); ++i) {
      double p = std::exp(terms[i] - peak) / acc;
      const double* z = Z.data() + i * j;
      for (std::size_t d = 0; d < j; ++d) mean[d] += p * z[d];
    }
    for (std::size_t i = 0; i < terms.size(); ++i) {
      double p = std::exp(terms[i] - peak) / acc;
      const double* z = Z.data() + i * j;
      for (std::size_t d = 0; d < j; ++d) {
        double diff = z[d] - mean[d];
        var[d] += p * diff * diff;
      }
    }
    Tensor pm({j}), plv({j});
    for (std::size_t d = 0; d < j; ++d) {
      double floor = 1e-4 * std::exp(proposal.logvar[d]);
      pm[d] = mean[d];
      plv[d] = std::log(std::max(var[d], floor) * 1.44);
    }
    proposal = GaussianDiag(pm, plv);
  }
  return result;
}

BoundBreakdown exact_bound(const LoadedModel& model, const Tensor& x, const Tensor& y,
                           std::size_t nodes) {
  check_oracle_pre(model, x, y, nodes);
  GaussHermite rule = gauss_hermite(nodes);
  GaussianDiag q = model_posterior(model, x, y);
  GaussianDiag prior = conditional_prior(model, y);

  Tensor Z;
  std::vector<double> log_w;
  latent_nodes(q, rule, Z, log_w);
  std::vector<double> log_p = decoder_log_densities(model, x, y, Z);

  double j_dims = static_cast<double>(model.config.model.latent_dim);
  double norm = std::exp(-0.5 * j_dims * kLogPi);
  double recon = 0.0;
  for (std::size_t i = 0; i < log_p.size(); ++i) {
    recon += std::exp(log_w[i]) * norm * log_p[i];
  }

  BoundBreakdown out;
  out.recon = recon;
  out.kl = kl_diag(q, prior);
  out.y_term = 0.0;
  out.bound = recon - out.kl;
  return out;
}

std::vector<double> default_sigma_grid() {
  std::vector<double> grid(20);
  for (std::size_t i = 0; i < 20; ++i) {
    grid[i] = std::pow(10.0, -2.0 + 2.0 * static_cast<double>(i) / 19.0);
  }
  return grid;
}

void ParzenConfig::validate() const {
  if (samples < 2) throw ValueError("parzen sampling needs at least 2 samples per instance");
  if (sigma_grid.empty()) throw ValueError("the sigma grid is empty");
  for (std::size_t i = 0; i < sigma_grid.size(); ++i) {
    if (!(sigma_grid[i] > 0.0)) throw ValueError("sigma grid entries must be positive");
    if (i > 0 && !(sigma_grid[i] > sigma_grid[i - 1])) {
      throw ValueError("sigma grid must be strictly ascending");
    }
  }
}

namespace {

// `samples` decoded prior-mean images for one attribute vector.
std::vector<Tensor> conditional_samples(const LoadedModel& model, const Tensor& y,
                                        std::size_t count, Rng& rng) {
  std::size_t j = model.config.model.latent_dim;
  Tensor eps = rng.normal_tensor({count, j});
  Tensor Z({count, j});
  if (const CmmaModel* m = cmma_of(model)) {
    GaussianDiag prior = m->prior(y);
    for (std::size_t s = 0; s < count; ++s) {
      for (std::size_t d = 0; d < j; ++d) {
        Z.at(s, d) = prior.mean[d] + eps.at(s, d) * std::exp(0.5 * prior.logvar[d]);
      }
    }
  } else {
    Z = eps;
  }
  GaussianDiag px = [&] {
    if (const CmmaModel* m = cmma_of(model)) return m->decode(Z);
    Tensor yrep({count, y.numel()});
    for (std::size_t r = 0; r < count; ++r) {
      std::memcpy(yrep.data() + r * y.numel(), y.data(), y.numel() * sizeof(double));
    }
    return model.cvae->decode(Z, yrep);
  }();
  std::vector<Tensor> out;
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s) out.push_back(px.mean.row_at(s));
  return out;
}

}  // namespace

ParzenReport parzen_eval(const LoadedModel& model, const MultimodalDataset& data,
                         const std::string& split, const ParzenConfig& cfg) {
  cfg.validate();
  check_dims(model, data);
  const std::vector<std::uint32_t>& val = data.split("val");
  const std::vector<std::uint32_t>& target = data.split(split);
  if (val.empty() || target.empty()) {
    throw ValueError("parzen evaluation needs nonempty validation and target splits");
  }

  std::vector<double> grid_sum(cfg.sigma_grid.size(), 0.0);
  for (std::uint32_t i : val) {
    Rng rng(cfg.seed + 1 + i);
    std::vector<Tensor> samples =
        conditional_samples(model, data.Y.row_at(i), cfg.samples, rng);
    Tensor x = data.X.row_at(i);
    for (std::size_t gi = 0; gi < cfg.sigma_grid.size(); ++gi) {
      grid_sum[gi] += parzen_log_density(x, samples, cfg.sigma_grid[gi]);
    }
  }

  ParzenReport report;
  std::size_t best = 0;
  for (std::size_t gi = 1; gi < grid_sum.size(); ++gi) {
    if (grid_sum[gi] > grid_sum[best]) best = gi;
  }
  report.sigma = cfg.sigma_grid[best];
  report.val_mean = grid_sum[best] / static_cast<double>(val.size());

  double total = 0.0;
  report.per_instance.reserve(target.size());
  for (std::uint32_t i : target) {
    Rng rng(cfg.seed + 1 + i);
    std::vector<Tensor> samples =
        conditional_samples(model, data.Y.row_at(i), cfg.samples, rng);
    double ll = parzen_log_density(data.X.row_at(i), samples, report.sigma);
    report.per_instance.push_back(ll);
    total += ll;
  }
  report.eval_mean = total / static_cast<double>(target.size());
  return report;
}

std::vector<LatentMapRow> latent_map(const LoadedModel& model, const MultimodalDataset& data,
                                     const std::string& split) {
  check_dims(model, data);
  const std::vector<std::uint32_t>& idx = data.split(split);
  std::vector<LatentMapRow> rows;
  rows.reserve(idx.size());
  for (std::uint32_t i : idx) {
    Tensor x = data.X.row_at(i);
    Tensor y = data.Y.row_at(i);
    GaussianDiag prior = conditional_prior(model, y);
    GaussianDiag post = model_posterior(model, x, y);
    LatentMapRow row;
    row.id = i;
    for (std::size_t d = 0; d < prior.dim(); ++d) {
      row.prior_mean.push_back(prior.mean[d]);
      row.prior_std.push_back(std::exp(0.5 * prior.logvar[d]));
      row.post_mean.push_back(post.mean[d]);
      row.post_std.push_back(std::exp(0.5 * post.logvar[d]));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_latent_map_csv(const std::vector<LatentMapRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  std::size_t j = rows.empty() ? 0 : rows[0].prior_mean.size();
  out << "id";
  for (const char* group : {"prior_mean", "prior_std", "post_mean", "post_std"}) {
    for (std::size_t d = 0; d < j; ++d) out << "," << group << "_" << d;
  }
  out << "\n";
  char buf[32];
  for (const LatentMapRow& row : rows) {
    out << row.id;
    for (const std::vector<double>* group :
         {&row.prior_mean, &row.prior_std, &row.post_mean, &row.post_std}) {
      for (double v : *group) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        out << "," << buf;
      }
    }
    out << "\n";
  }
  if (!out) throw FormatError("failed while writing '" + path + "'");
}

GenerateMatchReport attribute_match_generate(const LoadedModel& model, const Tensor& Ys) {
  const ModelConfig& mc = model.config.model;
  if (Ys.rank() != 2 || Ys.cols() != mc.y_dim) {
    throw ShapeError("attribute rows must be (n x " + std::to_string(mc.y_dim) + "), got " +
                     Ys.shape_str());
  }
  std::size_t side = static_cast<std::size_t>(std::lround(std::sqrt(double(mc.x_dim))));
  if (side * side != mc.x_dim) {
    throw ValueError("the oracle needs square images; model x dimension is " +
                     std::to_string(mc.x_dim));
  }
  Tensor eps0 = Tensor::zeros({mc.latent_dim});
  GenerateMatchReport report;
  for (std::size_t r = 0; r < Ys.rows(); ++r) {
    Tensor y = Ys.row_at(r);
    Tensor x = cmma_of(model) ? model.cmma->generate(y, eps0) : model.cvae->generate(y, eps0);
    OracleReading reading = attribute_oracle(x, side);
    for (std::size_t b = 0; b < kAttributeCount; ++b) {
      if (reading.bits[b] == static_cast<int>(y[b])) report.accuracy[b] += 1.0;
    }
  }
  report.count = Ys.rows();
  for (double& a : report.accuracy) a /= static_cast<double>(report.count);
  return report;
}

ModifyMatchReport attribute_match_modify(const LoadedModel& model,
                                         const MultimodalDataset& data,
                                         const std::string& split, std::size_t bit,
                                         std::size_t limit) {
  if (!cmma_of(model)) {
    throw ValueError("attribute modification requires the conditional multimodal model");
  }
  check_dims(model, data);
  if (bit >= kAttributeCount) {
    throw ValueError("attribute bit " + std::to_string(bit) + " out of range");
  }
  const std::vector<std::uint32_t>& idx = data.split(split);
  std::size_t count = std::min(limit, idx.size());
  if (count == 0) throw ValueError("no instances to modify");
  std::size_t side = data.side();

  ModifyMatchReport report;
  report.bit = bit;
  for (std::size_t k = 0; k < count; ++k) {
    std::uint32_t i = idx[k];
    Tensor x = data.X.row_at(i);
    Tensor y = data.Y.row_at(i);
    Tensor y_new = y;
    y_new[bit] = 1.0 - y_new[bit];
    Tensor edited = model.cmma->modify(x, y, y_new);
    OracleReading reading = attribute_oracle(edited, side);
    if (reading.bits[bit] == static_cast<int>(y_new[bit])) report.flip_rate += 1.0;
    for (std::size_t b = 0; b < kAttributeCount; ++b) {
      if (b == bit) continue;
      if (reading.bits[b] == static_cast<int>(y[b])) report.preserve[b] += 1.0;
    }
  }
  report.count = count;
  report.flip_rate /= static_cast<double>(count);
  for (std::size_t b = 0; b < kAttributeCount; ++b) {
    report.preserve[b] /= static_cast<double>(count);
  }
  report.preserve[bit] = report.flip_rate;
  return report;
}

void write_eval_summary(const std::string& path, const std::string& model_kind,
                        const std::string& split, const BoundReport& bound,
                        const ParzenReport& parzen, std::uint64_t train_seed,
                        std::uint64_t eval_seed) {
  nlohmann::json j{{"model", model_kind},
                   {"split", split},
                   {"bound",
                    {{"recon", bound.recon}, {"kl", bound.kl}, {"total", bound.bound}}},
                   {"parzen", {{"sigma", parzen.sigma}, {"mean_ll", parzen.eval_mean}}},
                   {"seeds", {{"train", train_seed}, {"eval", eval_seed}}}};
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out << j.dump(1) << "\n";
  if (!out) throw FormatError("failed while writing '" + path + "'");
}

}  // namespace cmma
