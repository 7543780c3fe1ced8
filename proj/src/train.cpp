#include "cmma/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <type_traits>

#include "cmma/errors.hpp"
#include "cmma/rng.hpp"
#include "cmma/tape.hpp"
#include "json.hpp"

namespace cmma {

void AdagradState::init(const ParamSet& params) {
  accum.clear();
  for (std::size_t i = 0; i < params.size(); ++i) {
    accum.push_back(Tensor::zeros(params[i].value.shape()));
  }
}

void adagrad_step(ParamSet& params, AdagradState& state) {
  if (state.accum.size() != params.size()) {
    throw ShapeError("adagrad_step: state tracks " + std::to_string(state.accum.size()) +
                     " parameters, set has " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    Tensor& g_acc = state.accum[i];
    if (!g_acc.same_shape(p.value)) {
      throw ShapeError("adagrad_step: accumulator shape " + g_acc.shape_str() +
                       " vs parameter " + p.value.shape_str());
    }
    for (std::size_t k = 0; k < p.value.numel(); ++k) {
      double g = p.grad[k];
      g_acc[k] += g * g;
      p.value[k] -= state.lr * g / (std::sqrt(g_acc[k]) + state.damping);
    }
  }
}

void TrainConfig::validate() const {
  if (model_kind != "cmma" && model_kind != "cvae") {
    throw ValueError("model kind must be cmma or cvae, got '" + model_kind + "'");
  }
  if (epochs < 1) throw ValueError("epochs must be at least 1");
  if (batch < 1) throw ValueError("batch size must be at least 1");
  if (!(lr > 0.0)) throw ValueError("learning rate must be positive");
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

struct BatchTerms {
  double recon = 0.0, kl = 0.0, y_term = 0.0, bound = 0.0;
};

// One forward (and optionally backward) pass over a batch; returns batch sums.
template <typename Model>
BatchTerms run_batch(const Model& model, const Tensor& X, const Tensor& Y, Rng& noise_rng,
                     bool with_grad, double* loss_out) {
  std::size_t b = X.rows();
  std::size_t j = model.config().latent_dim;
  Tensor eps = noise_rng.normal_tensor({b, j});
  Tensor eps_prior;
  if constexpr (std::is_same_v<Model, CmmaModel>) {
    if (model.has_y_decoder()) eps_prior = noise_rng.normal_tensor({b, j});
  }

  Tape t;
  BoundVars bv = [&] {
    if constexpr (std::is_same_v<Model, CmmaModel>) {
      return model.bound_graph(t, X, Y, eps, eps_prior);
    } else {
      return model.bound_graph(t, X, Y, eps);
    }
  }();
  BatchTerms terms{bv.recon.scalar(), bv.kl.scalar(), bv.y_term.scalar(), bv.bound.scalar()};
  if (with_grad) {
    Var loss = t.scale(bv.bound, -1.0 / static_cast<double>(b));
    if (loss_out) *loss_out = loss.scalar();
    t.backward(loss);
  }
  return terms;
}

template <typename Model>
double split_mean_bound(const Model& model, const MultimodalDataset& data,
                        const std::vector<std::uint32_t>& idx, std::size_t batch,
                        std::uint64_t eps_seed) {
  Rng rng(eps_seed);
  double total = 0.0;
  for (std::size_t lo = 0; lo < idx.size(); lo += batch) {
    std::size_t hi = std::min(lo + batch, idx.size());
    Tensor X = gather_rows(data.X, idx, lo, hi);
    Tensor Y = gather_rows(data.Y, idx, lo, hi);
    total += run_batch(model, X, Y, rng, false, nullptr).bound;
  }
  return total / static_cast<double>(idx.size());
}

Tensor attribute_mean(const MultimodalDataset& data, const std::vector<std::uint32_t>& idx) {
  Tensor mean({data.a()});
  for (std::uint32_t i : idx) {
    for (std::size_t j = 0; j < data.a(); ++j) mean[j] += data.Y.at(i, j);
  }
  for (std::size_t j = 0; j < data.a(); ++j) mean[j] /= static_cast<double>(idx.size());
  return mean;
}

Checkpoint snapshot(const TrainConfig& cfg, const ParamSet& params, const AdagradState& state,
                    const Tensor& y_mean, const EpochMetrics& metrics) {
  Checkpoint c;
  c.config = cfg;
  for (std::size_t i = 0; i < params.size(); ++i) {
    c.params.emplace_back(params[i].name, params[i].value);
  }
  c.has_adagrad = true;
  c.adagrad = state;
  c.y_mean = y_mean;
  c.final_metrics = metrics;
  return c;
}

}  // namespace

TrainOutput train(const MultimodalDataset& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.train_idx.empty() || data.val_idx.empty()) {
    throw ValueError("train: dataset is missing train or validation split");
  }
  TrainConfig resolved = cfg;
  resolved.model.x_dim = data.m();
  resolved.model.y_dim = data.a();

  Rng rng(resolved.seed);
  const bool is_cmma = resolved.model_kind == "cmma";
  std::unique_ptr<CmmaModel> cmma;
  std::unique_ptr<CvaeModel> cvae;
  if (is_cmma) {
    cmma = std::make_unique<CmmaModel>(resolved.model, &rng);
    cmma->set_y_mean(attribute_mean(data, data.train_idx));
  } else {
    cvae = std::make_unique<CvaeModel>(resolved.model, &rng);
  }
  ParamSet& params = is_cmma ? cmma->params() : cvae->params();

  AdagradState state;
  state.lr = resolved.lr;
  state.damping = resolved.damping;
  state.init(params);

  Tensor y_mean = is_cmma ? cmma->y_mean() : attribute_mean(data, data.train_idx);

  TrainOutput out;
  double best_val = -std::numeric_limits<double>::infinity();
  std::vector<std::uint32_t> order = data.train_idx;
  const std::size_t n_train = order.size();

  for (std::size_t epoch = 1; epoch <= resolved.epochs; ++epoch) {
    rng.shuffle(order);
    double sum_recon = 0.0, sum_kl = 0.0, sum_y = 0.0, sum_bound = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t lo = 0; lo < n_train; lo += resolved.batch, ++batch_index) {
      std::size_t hi = std::min(lo + resolved.batch, n_train);
      Tensor X = gather_rows(data.X, order, lo, hi);
      Tensor Y = gather_rows(data.Y, order, lo, hi);
      params.zero_grads();
      double loss = 0.0;
      BatchTerms terms = is_cmma ? run_batch(*cmma, X, Y, rng, true, &loss)
                                 : run_batch(*cvae, X, Y, rng, true, &loss);
      if (!std::isfinite(loss)) {
        throw Error("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                    ", batch " + std::to_string(batch_index));
      }
      adagrad_step(params, state);
      sum_recon += terms.recon;
      sum_kl += terms.kl;
      sum_y += terms.y_term;
      sum_bound += terms.bound;
    }

    EpochMetrics em;
    em.epoch = epoch;
    double inv_n = 1.0 / static_cast<double>(n_train);
    em.train_bound = sum_bound * inv_n;
    em.train_recon = sum_recon * inv_n;
    em.train_kl = sum_kl * inv_n;
    em.train_y_term = sum_y * inv_n;
    em.val_bound = is_cmma ? split_mean_bound(*cmma, data, data.val_idx, resolved.batch,
                                              resolved.seed + 1)
                           : split_mean_bound(*cvae, data, data.val_idx, resolved.batch,
                                              resolved.seed + 1);
    out.log.push_back(em);

    if (em.val_bound > best_val) {
      best_val = em.val_bound;
      out.best_state = snapshot(resolved, params, state, y_mean, em);
    }
  }
  out.final_state = snapshot(resolved, params, state, y_mean, out.log.back());
  return out;
}

namespace {

using nlohmann::json;

json tensor_data(const Tensor& t) {
  json arr = json::array();
  for (std::size_t k = 0; k < t.numel(); ++k) arr.push_back(t[k]);
  return arr;
}

json shape_json(const Tensor& t) {
  json arr = json::array();
  for (std::size_t d : t.shape()) arr.push_back(d);
  return arr;
}

const char* mode_name(DensityMode m) {
  return m == DensityMode::Exact ? "exact" : "paper";
}

DensityMode mode_from_name(const std::string& s) {
  if (s == "exact") return DensityMode::Exact;
  if (s == "paper") return DensityMode::Paper;
  throw FormatError("checkpoint names unknown reconstruction mode '" + s + "'");
}

json config_to_json(const TrainConfig& cfg) {
  return json{{"model_kind", cfg.model_kind},
              {"epochs", cfg.epochs},
              {"batch", cfg.batch},
              {"lr", cfg.lr},
              {"damping", cfg.damping},
              {"seed", cfg.seed},
              {"model",
               {{"x_dim", cfg.model.x_dim},
                {"y_dim", cfg.model.y_dim},
                {"latent_dim", cfg.model.latent_dim},
                {"f_hidden", cfg.model.f_hidden},
                {"h_hidden", cfg.model.h_hidden},
                {"g_hidden", cfg.model.g_hidden},
                {"h2_hidden", cfg.model.h2_hidden},
                {"lambda_y", cfg.model.lambda_y},
                {"encoder_uses_y", cfg.model.encoder_uses_y},
                {"recon_mode", mode_name(cfg.model.recon_mode)}}}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig cfg;
  cfg.model_kind = j.at("model_kind").get<std::string>();
  cfg.epochs = j.at("epochs").get<std::size_t>();
  cfg.batch = j.at("batch").get<std::size_t>();
  cfg.lr = j.at("lr").get<double>();
  cfg.damping = j.at("damping").get<double>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  const json& m = j.at("model");
  cfg.model.x_dim = m.at("x_dim").get<std::size_t>();
  cfg.model.y_dim = m.at("y_dim").get<std::size_t>();
  cfg.model.latent_dim = m.at("latent_dim").get<std::size_t>();
  cfg.model.f_hidden = m.at("f_hidden").get<std::vector<std::size_t>>();
  cfg.model.h_hidden = m.at("h_hidden").get<std::vector<std::size_t>>();
  cfg.model.g_hidden = m.at("g_hidden").get<std::vector<std::size_t>>();
  cfg.model.h2_hidden = m.at("h2_hidden").get<std::vector<std::size_t>>();
  cfg.model.lambda_y = m.at("lambda_y").get<double>();
  cfg.model.encoder_uses_y = m.at("encoder_uses_y").get<bool>();
  cfg.model.recon_mode = mode_from_name(m.at("recon_mode").get<std::string>());
  return cfg;
}

Tensor tensor_from_json(const json& shape_j, const json& data_j, const std::string& what) {
  std::vector<std::size_t> shape;
  for (const json& d : shape_j) shape.push_back(d.get<std::size_t>());
  std::size_t expect = 1;
  for (std::size_t d : shape) expect *= d;
  if (shape.empty()) expect = 0;
  if (data_j.size() != expect) {
    throw ShapeError(what + " declares shape " + shape_str(shape) + " (" +
                     std::to_string(expect) + " values) but carries " +
                     std::to_string(data_j.size()));
  }
  Tensor t(shape);
  for (std::size_t k = 0; k < t.numel(); ++k) t[k] = data_j[k].get<double>();
  return t;
}

}  // namespace

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  json j;
  j["format_version"] = c.format_version;
  j["config"] = config_to_json(c.config);
  j["y_mean"] = tensor_data(c.y_mean);
  json params = json::array();
  for (const auto& [name, value] : c.params) {
    params.push_back(json{{"name", name}, {"shape", shape_json(value)},
                          {"data", tensor_data(value)}});
  }
  j["params"] = params;
  if (c.has_adagrad) {
    json accum = json::array();
    for (const Tensor& g : c.adagrad.accum) {
      accum.push_back(json{{"shape", shape_json(g)}, {"data", tensor_data(g)}});
    }
    j["adagrad"] = json{{"lr", c.adagrad.lr}, {"damping", c.adagrad.damping},
                        {"accum", accum}};
  }
  j["metrics"] = json{{"epoch", c.final_metrics.epoch},
                      {"train_bound", c.final_metrics.train_bound},
                      {"train_recon", c.final_metrics.train_recon},
                      {"train_kl", c.final_metrics.train_kl},
                      {"train_y_term", c.final_metrics.train_y_term},
                      {"val_bound", c.final_metrics.val_bound}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out << j.dump(1) << "\n";
  if (!out) throw FormatError("failed while writing '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("checkpoint '" + path + "' is not complete valid JSON: " + e.what());
  }

  Checkpoint c;
  try {
    if (!j.contains("format_version")) {
      throw FormatError("checkpoint '" + path + "' has no format_version field");
    }
    c.format_version = j.at("format_version").get<int>();
    if (c.format_version != 1) {
      throw VersionError("checkpoint declares format version " +
                         std::to_string(c.format_version) + ", this reader expects version 1");
    }
    c.config = config_from_json(j.at("config"));
    c.y_mean = tensor_from_json(json::array({j.at("y_mean").size()}), j.at("y_mean"),
                                "y_mean");
    for (const json& p : j.at("params")) {
      std::string name = p.at("name").get<std::string>();
      c.params.emplace_back(name, tensor_from_json(p.at("shape"), p.at("data"),
                                                   "parameter '" + name + "'"));
    }
    if (j.contains("adagrad")) {
      c.has_adagrad = true;
      const json& a = j.at("adagrad");
      c.adagrad.lr = a.at("lr").get<double>();
      c.adagrad.damping = a.at("damping").get<double>();
      std::size_t slot = 0;
      for (const json& g : a.at("accum")) {
        c.adagrad.accum.push_back(tensor_from_json(g.at("shape"), g.at("data"),
                                                   "adagrad accumulator " +
                                                       std::to_string(slot)));
        ++slot;
      }
    }
    const json& m = j.at("metrics");
    c.final_metrics.epoch = m.at("epoch").get<std::size_t>();
    c.final_metrics.train_bound = m.at("train_bound").get<double>();
    c.final_metrics.train_recon = m.at("train_recon").get<double>();
    c.final_metrics.train_kl = m.at("train_kl").get<double>();
    c.final_metrics.train_y_term = m.at("train_y_term").get<double>();
    c.final_metrics.val_bound = m.at("val_bound").get<double>();
  } catch (const json::exception& e) {
    throw FormatError("checkpoint '" + path + "' is structurally broken: " + e.what());
  }
  return c;
}

LoadedModel instantiate(const Checkpoint& c) {
  c.config.validate();
  LoadedModel out;
  out.config = c.config;
  const bool is_cmma = c.config.model_kind == "cmma";
  if (is_cmma)
    out.cmma = std::make_unique<CmmaModel>(c.config.model, nullptr);
  else
    out.cvae = std::make_unique<CvaeModel>(c.config.model, nullptr);
  ParamSet& params = is_cmma ? out.cmma->params() : out.cvae->params();

  if (c.params.size() != params.size()) {
    throw FormatError("checkpoint carries " + std::to_string(c.params.size()) +
                      " parameters, the configured model has " +
                      std::to_string(params.size()));
  }
  for (const auto& [name, value] : c.params) {
    if (!params.contains(name)) {
      throw FormatError("checkpoint names unknown parameter '" + name + "'");
    }
    Parameter& p = params.at(name);
    if (!p.value.same_shape(value)) {
      throw ShapeError("parameter '" + name + "' has shape " + value.shape_str() +
                       " in the checkpoint, the model expects " + p.value.shape_str());
    }
    p.value = value;
  }
  if (is_cmma) out.cmma->set_y_mean(c.y_mean);
  return out;
}

GradCheckReport grad_check(const TrainConfig& cfg, double tolerance, std::size_t trials) {
  TrainConfig local = cfg;
  local.validate();
  if (local.model.x_dim == 0 || local.model.y_dim == 0) {
    throw ValueError("grad_check: model x_dim and y_dim must be set");
  }
  GradCheckReport report;
  std::map<std::string, double> block_err;

  for (std::size_t trial = 0; trial < trials; ++trial) {
    Rng init(local.seed + trial);
    std::unique_ptr<CmmaModel> cmma;
    std::unique_ptr<CvaeModel> cvae;
    const bool is_cmma = local.model_kind == "cmma";
    if (is_cmma)
      cmma = std::make_unique<CmmaModel>(local.model, &init);
    else
      cvae = std::make_unique<CvaeModel>(local.model, &init);
    ParamSet& params = is_cmma ? cmma->params() : cvae->params();
    if (params.scalar_count() > 5000) {
      throw ValueError("grad_check: " + std::to_string(params.scalar_count()) +
                       " parameters exceed the finite-difference budget of 5000");
    }

    Rng noise(local.seed + 1000 + trial);
    Tensor x = noise.normal_tensor({local.model.x_dim});
    Tensor y({local.model.y_dim});
    for (std::size_t j = 0; j < y.numel(); ++j) y[j] = static_cast<double>(noise.below(2));
    Tensor eps = noise.normal_tensor({local.model.latent_dim});
    Tensor eps_prior = noise.normal_tensor({local.model.latent_dim});

    auto build = [&](Tape& t) {
      if (is_cmma) return cmma->bound_graph(t, x, y, eps, eps_prior).bound;
      return cvae->bound_graph(t, x, y, eps).bound;
    };

    params.zero_grads();
    Tape t;
    t.backward(build(t));
    auto loss = [&]() {
      Tape tt;
      return build(tt).scalar();
    };
    auto fd = finite_difference_gradient(loss, params, 1e-5);

    for (std::size_t p = 0; p < params.size(); ++p) {
      std::string block = params[p].name.substr(0, params[p].name.find('.'));
      double& worst = block_err[block];
      for (std::size_t k = 0; k < fd[p].numel(); ++k) {
        worst = std::max(worst, gradient_rel_error(params[p].grad[k], fd[p][k]));
      }
    }
  }

  for (const auto& [block, err] : block_err) {
    report.blocks.push_back({block, err});
    report.max_rel_error = std::max(report.max_rel_error, err);
  }
  report.passed = report.max_rel_error <= tolerance;
  return report;
}

}  // namespace cmma
