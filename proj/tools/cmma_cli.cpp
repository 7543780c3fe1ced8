// Command-line front end for the full pipeline: dataset generation,
// training, bound / Parzen / quadrature evaluation, conditional generation,
// attribute modification, attribute inference, latent-map export, and
// gradient checking.
//
// Exit codes: 0 success, 1 usage error, 2 runtime or validation error.
// Every run prints its resolved configuration as a single JSON line to
// standard output before doing any work, then a single JSON result line
// after finishing. Heavyweight outputs (datasets, checkpoints, images,
// CSV) go to the files named by --out.

#include <cmath>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cmma/data.hpp"
#include "cmma/errors.hpp"
#include "cmma/eval.hpp"
#include "cmma/kernels.hpp"
#include "cmma/model.hpp"
#include "cmma/rng.hpp"
#include "cmma/tensor.hpp"
#include "cmma/train.hpp"

namespace {

using nlohmann::json;

// Comma-separated list of layer widths; an empty string means no hidden
// layers. Throws CLI::ValidationError so malformed values surface as usage
// errors naming the flag.
std::vector<std::size_t> parse_widths(const std::string& flag, const std::string& text) {
  std::vector<std::size_t> out;
  if (text.empty()) return out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t comma = text.find(',', start);
    std::string piece = text.substr(start, comma == std::string::npos ? comma : comma - start);
    try {
      std::size_t used = 0;
      long v = std::stol(piece, &used);
      if (used != piece.size() || v <= 0) throw std::invalid_argument(piece);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw CLI::ValidationError(flag, "'" + piece + "' is not a positive integer");
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

// Comma-separated attribute bits, e.g. "1,0,1,1,0,0,0,0".
std::vector<double> parse_bits(const std::string& flag, const std::string& text) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t comma = text.find(',', start);
    std::string piece = text.substr(start, comma == std::string::npos ? comma : comma - start);
    if (piece == "0")
      out.push_back(0.0);
    else if (piece == "1")
      out.push_back(1.0);
    else
      throw CLI::ValidationError(flag, "'" + piece + "' is not a 0/1 bit");
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<double> parse_sigma_grid(const std::string& flag, const std::string& text) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t comma = text.find(',', start);
    std::string piece = text.substr(start, comma == std::string::npos ? comma : comma - start);
    try {
      std::size_t used = 0;
      double v = std::stod(piece, &used);
      if (used != piece.size()) throw std::invalid_argument(piece);
      out.push_back(v);
    } catch (const std::exception&) {
      throw CLI::ValidationError(flag, "'" + piece + "' is not a number");
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

cmma::Tensor bits_tensor(const std::vector<double>& bits) {
  cmma::Tensor t({bits.size()});
  for (std::size_t i = 0; i < bits.size(); ++i) t[i] = bits[i];
  return t;
}

json widths_json(const std::vector<std::size_t>& w) { return json(w); }

void emit(const json& j) { std::cout << j.dump() << "\n" << std::flush; }

void write_json_file(const json& j, const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw cmma::FormatError("cannot open " + path + " for writing");
  std::string text = j.dump(1);
  text.push_back('\n');
  std::fwrite(text.data(), 1, text.size(), f);
  std::fclose(f);
}

cmma::LoadedModel load_model(const std::string& ckpt_path) {
  return cmma::instantiate(cmma::load_checkpoint(ckpt_path));
}

std::size_t square_side(std::size_t m) {
  auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(m))));
  if (side * side != m)
    throw cmma::ValueError("image dimension " + std::to_string(m) + " is not a perfect square");
  return side;
}

// Shared flag bundles. CLI11 keeps pointers into these, so they live for
// the whole run.
struct Args {
  // gen-data
  std::size_t n = 0;
  std::size_t side = 16;
  double noise = 0.05;
  // train / gradcheck model shape
  std::string model_kind = "cmma";
  std::size_t latent_dim = 8;
  std::size_t x_dim = 16;
  std::size_t y_dim = 4;
  std::string f_hidden = "64";
  std::string h_hidden = "256,64";
  std::string g_hidden = "64,256";
  std::string h2_hidden = "64";
  double lambda_y = 0.0;
  std::string recon_mode = "exact";
  // train loop
  std::size_t epochs = 200;
  std::size_t batch = 100;
  double lr = 0.01;
  double damping = 1e-8;
  // shared
  std::uint64_t seed = 1;
  std::uint64_t eval_seed = 1;
  int threads = 1;
  std::string data_path;
  std::string ckpt_path;
  std::string out_path;
  std::string best_out_path;
  std::string in_path;
  std::string split = "test";
  // eval-parzen
  std::size_t samples = 100;
  std::string sigma_grid;
  // eval-oracle
  std::size_t nodes = 128;
  std::size_t limit = 0;
  // generate / modify / infer-attrs
  std::string attrs;
  std::string attrs_old;
  std::string attrs_new;
  // gradcheck
  double tolerance = 1e-4;
  std::size_t trials = 1;
};

cmma::ModelConfig model_config_from_args(const Args& a) {
  cmma::ModelConfig m;
  m.x_dim = a.x_dim;
  m.y_dim = a.y_dim;
  m.latent_dim = a.latent_dim;
  m.f_hidden = parse_widths("--f-hidden", a.f_hidden);
  m.h_hidden = parse_widths("--h-hidden", a.h_hidden);
  m.g_hidden = parse_widths("--g-hidden", a.g_hidden);
  m.h2_hidden = parse_widths("--h2-hidden", a.h2_hidden);
  m.lambda_y = a.lambda_y;
  m.recon_mode = a.recon_mode == "paper" ? cmma::DensityMode::Paper : cmma::DensityMode::Exact;
  return m;
}

int cmd_gen_data(const Args& a) {
  cmma::GlyphConfig cfg;
  cfg.side = a.side;
  cfg.noise_sigma = a.noise;
  cfg.seed = a.seed;
  emit(json{{"command", "gen-data"},
            {"n", a.n},
            {"side", a.side},
            {"noise", a.noise},
            {"seed", a.seed},
            {"out", a.out_path}});
  cmma::MultimodalDataset d = cmma::generate_dataset(a.n, cfg);
  cmma::save_dataset(d, a.out_path);
  emit(json{{"n", d.n()},
            {"pixels", d.m()},
            {"attributes", d.a()},
            {"train", d.train_idx.size()},
            {"val", d.val_idx.size()},
            {"test", d.test_idx.size()},
            {"out", a.out_path}});
  return 0;
}

int cmd_train(const Args& a) {
  cmma::TrainConfig cfg;
  cfg.model_kind = a.model_kind;
  cfg.epochs = a.epochs;
  cfg.batch = a.batch;
  cfg.lr = a.lr;
  cfg.damping = a.damping;
  cfg.seed = a.seed;
  cfg.model = model_config_from_args(a);
  emit(json{{"command", "train"},
            {"data", a.data_path},
            {"model", cfg.model_kind},
            {"latent_dim", cfg.model.latent_dim},
            {"f_hidden", widths_json(cfg.model.f_hidden)},
            {"h_hidden", widths_json(cfg.model.h_hidden)},
            {"g_hidden", widths_json(cfg.model.g_hidden)},
            {"h2_hidden", widths_json(cfg.model.h2_hidden)},
            {"lambda_y", cfg.model.lambda_y},
            {"recon_mode", a.recon_mode},
            {"epochs", cfg.epochs},
            {"batch", cfg.batch},
            {"lr", cfg.lr},
            {"damping", cfg.damping},
            {"seed", cfg.seed},
            {"threads", a.threads},
            {"out", a.out_path},
            {"best_out", a.best_out_path}});
  cmma::MultimodalDataset d = cmma::load_dataset(a.data_path);
  cmma::TrainOutput result = cmma::train(d, cfg);
  cmma::save_checkpoint(result.final_state, a.out_path);
  if (!a.best_out_path.empty()) cmma::save_checkpoint(result.best_state, a.best_out_path);
  const cmma::EpochMetrics& last = result.final_state.final_metrics;
  const cmma::EpochMetrics& best = result.best_state.final_metrics;
  emit(json{{"epochs_run", result.log.size()},
            {"final",
             {{"epoch", last.epoch},
              {"train_bound", last.train_bound},
              {"train_recon", last.train_recon},
              {"train_kl", last.train_kl},
              {"train_y_term", last.train_y_term},
              {"val_bound", last.val_bound}}},
            {"best", {{"epoch", best.epoch}, {"val_bound", best.val_bound}}},
            {"out", a.out_path}});
  return 0;
}

int cmd_eval_bound(const Args& a) {
  emit(json{{"command", "eval-bound"},
            {"ckpt", a.ckpt_path},
            {"data", a.data_path},
            {"split", a.split},
            {"eval_seed", a.eval_seed},
            {"threads", a.threads},
            {"out", a.out_path}});
  cmma::LoadedModel model = load_model(a.ckpt_path);
  cmma::MultimodalDataset d = cmma::load_dataset(a.data_path);
  cmma::BoundReport r = cmma::test_bound(model, d, a.split, a.eval_seed);
  json result{{"split", a.split}, {"count", r.count},   {"recon", r.recon},
              {"kl", r.kl},       {"y_term", r.y_term}, {"bound", r.bound}};
  if (!a.out_path.empty()) write_json_file(result, a.out_path);
  emit(result);
  return 0;
}

int cmd_eval_parzen(const Args& a) {
  cmma::ParzenConfig cfg;
  cfg.samples = a.samples;
  cfg.seed = a.seed;
  if (!a.sigma_grid.empty()) cfg.sigma_grid = parse_sigma_grid("--sigma-grid", a.sigma_grid);
  emit(json{{"command", "eval-parzen"},
            {"ckpt", a.ckpt_path},
            {"data", a.data_path},
            {"split", a.split},
            {"samples", cfg.samples},
            {"sigma_grid", cfg.sigma_grid},
            {"seed", cfg.seed},
            {"threads", a.threads},
            {"out", a.out_path}});
  cmma::LoadedModel model = load_model(a.ckpt_path);
  cmma::MultimodalDataset d = cmma::load_dataset(a.data_path);
  cmma::ParzenReport r = cmma::parzen_eval(model, d, a.split, cfg);
  json result{{"split", a.split},
              {"count", r.per_instance.size()},
              {"sigma", r.sigma},
              {"val_mean", r.val_mean},
              {"eval_mean", r.eval_mean}};
  if (!a.out_path.empty()) write_json_file(result, a.out_path);
  emit(result);
  return 0;
}

int cmd_eval_oracle(const Args& a) {
  emit(json{{"command", "eval-oracle"},
            {"ckpt", a.ckpt_path},
            {"data", a.data_path},
            {"split", a.split},
            {"nodes", a.nodes},
            {"limit", a.limit},
            {"threads", a.threads},
            {"out", a.out_path}});
  cmma::LoadedModel model = load_model(a.ckpt_path);
  cmma::MultimodalDataset d = cmma::load_dataset(a.data_path);
  const std::vector<std::uint32_t>& idx = d.split(a.split);
  std::size_t count = idx.size();
  if (a.limit > 0 && a.limit < count) count = a.limit;
  if (count == 0) throw cmma::ValueError("split '" + a.split + "' is empty");
  double sum_bound = 0.0, sum_loglik = 0.0, max_violation = -1e300;
  for (std::size_t k = 0; k < count; ++k) {
    cmma::Tensor x = d.X.row_at(idx[k]);
    cmma::Tensor y = d.Y.row_at(idx[k]);
    cmma::BoundBreakdown b = cmma::exact_bound(model, x, y, a.nodes);
    double ll = cmma::quadrature_loglik(model, x, y, a.nodes);
    sum_bound += b.bound;
    sum_loglik += ll;
    max_violation = std::max(max_violation, b.bound - ll);
  }
  json result{{"split", a.split},
              {"count", count},
              {"nodes", a.nodes},
              {"mean_bound", sum_bound / static_cast<double>(count)},
              {"mean_loglik", sum_loglik / static_cast<double>(count)},
              {"mean_gap", (sum_loglik - sum_bound) / static_cast<double>(count)},
              {"max_violation", max_violation}};
  if (!a.out_path.empty()) write_json_file(result, a.out_path);
  emit(result);
  return 0;
}

int cmd_generate(const Args& a) {
  std::vector<double> bits = parse_bits("--attrs", a.attrs);
  emit(json{{"command", "generate"},
            {"ckpt", a.ckpt_path},
            {"attrs", bits},
            {"seed", a.seed},
            {"out", a.out_path}});
  cmma::LoadedModel model = load_model(a.ckpt_path);
  std::size_t y_dim = model.config.model.y_dim;
  if (bits.size() != y_dim)
    throw cmma::ValueError("--attrs carries " + std::to_string(bits.size()) +
                           " bits, the checkpoint expects " + std::to_string(y_dim));
  cmma::Tensor y = bits_tensor(bits);
  std::size_t j = model.config.model.latent_dim;
  cmma::Tensor eps({j});
  if (a.seed != 0) {
    cmma::Rng rng(a.seed);
    eps = rng.normal_tensor({j});
  }
  cmma::Tensor x = model.cmma ? model.cmma->generate(y, eps) : model.cvae->generate(y, eps);
  std::size_t side = square_side(x.numel());
  cmma::save_pgm(x, side, a.out_path);
  emit(json{{"out", a.out_path}, {"side", side}});
  return 0;
}

int cmd_modify(const Args& a) {
  std::vector<double> old_bits = parse_bits("--attrs-old", a.attrs_old);
  std::vector<double> new_bits = parse_bits("--attrs-new", a.attrs_new);
  emit(json{{"command", "modify"},
            {"ckpt", a.ckpt_path},
            {"in", a.in_path},
            {"attrs_old", old_bits},
            {"attrs_new", new_bits},
            {"out", a.out_path}});
  cmma::LoadedModel model = load_model(a.ckpt_path);
  if (!model.cmma)
    throw cmma::ValueError("attribute modification requires the conditional multimodal model");
  std::size_t y_dim = model.config.model.y_dim;
  if (old_bits.size() != y_dim || new_bits.size() != y_dim)
    throw cmma::ValueError("attribute vectors must carry " + std::to_string(y_dim) + " bits");
  std::size_t side = 0;
  cmma::Tensor x = cmma::load_pgm(a.in_path, side);
  if (x.numel() != model.config.model.x_dim)
    throw cmma::ShapeError("input image has " + std::to_string(x.numel()) +
                           " pixels, the checkpoint expects " +
                           std::to_string(model.config.model.x_dim));
  cmma::Tensor out = model.cmma->modify(x, bits_tensor(old_bits), bits_tensor(new_bits));
  cmma::save_pgm(out, side, a.out_path);
  emit(json{{"out", a.out_path}, {"side", side}});
  return 0;
}

int cmd_infer_attrs(const Args& a) {
  emit(json{{"command", "infer-attrs"}, {"ckpt", a.ckpt_path}, {"in", a.in_path},
            {"out", a.out_path}});
  cmma::LoadedModel model = load_model(a.ckpt_path);
  if (!model.cmma)
    throw cmma::ValueError("attribute inference requires the conditional multimodal model");
  std::size_t side = 0;
  cmma::Tensor x = cmma::load_pgm(a.in_path, side);
  if (x.numel() != model.config.model.x_dim)
    throw cmma::ShapeError("input image has " + std::to_string(x.numel()) +
                           " pixels, the checkpoint expects " +
                           std::to_string(model.config.model.x_dim));
  cmma::CmmaModel::InferredAttributes inf = model.cmma->infer_attributes(x);
  json result{{"raw", std::vector<double>(inf.raw.data(), inf.raw.data() + inf.raw.numel())},
              {"bits", std::vector<double>(inf.bits.data(), inf.bits.data() + inf.bits.numel())}};
  if (!a.out_path.empty()) write_json_file(result, a.out_path);
  emit(result);
  return 0;
}

int cmd_latent_map(const Args& a) {
  emit(json{{"command", "latent-map"},
            {"ckpt", a.ckpt_path},
            {"data", a.data_path},
            {"split", a.split},
            {"out", a.out_path}});
  cmma::LoadedModel model = load_model(a.ckpt_path);
  cmma::MultimodalDataset d = cmma::load_dataset(a.data_path);
  std::vector<cmma::LatentMapRow> rows = cmma::latent_map(model, d, a.split);
  cmma::write_latent_map_csv(rows, a.out_path);
  double prior_std = 0.0, post_std = 0.0;
  std::size_t terms = 0;
  for (const cmma::LatentMapRow& r : rows)
    for (std::size_t dim = 0; dim < r.prior_std.size(); ++dim) {
      prior_std += r.prior_std[dim];
      post_std += r.post_std[dim];
      ++terms;
    }
  json result{{"rows", rows.size()},
              {"mean_prior_std", terms ? prior_std / static_cast<double>(terms) : 0.0},
              {"mean_post_std", terms ? post_std / static_cast<double>(terms) : 0.0},
              {"out", a.out_path}};
  emit(result);
  return 0;
}

int cmd_gradcheck(const Args& a) {
  cmma::TrainConfig cfg;
  cfg.model_kind = a.model_kind;
  cfg.seed = a.seed;
  cfg.model = model_config_from_args(a);
  emit(json{{"command", "gradcheck"},
            {"model", cfg.model_kind},
            {"x_dim", cfg.model.x_dim},
            {"y_dim", cfg.model.y_dim},
            {"latent_dim", cfg.model.latent_dim},
            {"f_hidden", widths_json(cfg.model.f_hidden)},
            {"h_hidden", widths_json(cfg.model.h_hidden)},
            {"g_hidden", widths_json(cfg.model.g_hidden)},
            {"h2_hidden", widths_json(cfg.model.h2_hidden)},
            {"lambda_y", cfg.model.lambda_y},
            {"recon_mode", a.recon_mode},
            {"tolerance", a.tolerance},
            {"trials", a.trials},
            {"seed", cfg.seed}});
  cmma::GradCheckReport report = cmma::grad_check(cfg, a.tolerance, a.trials);
  json blocks = json::object();
  for (const cmma::GradCheckBlock& b : report.blocks) blocks[b.block] = b.max_rel_error;
  emit(json{{"passed", report.passed},
            {"max_rel_error", report.max_rel_error},
            {"blocks", blocks}});
  if (!report.passed) {
    std::cerr << "gradient check failed: max relative error " << report.max_rel_error
              << " exceeds " << a.tolerance << "\n";
    return 2;
  }
  return 0;
}

int run(int argc, char** argv) {
  Args a;
  CLI::App app{"Conditional multimodal autoencoder laboratory"};
  app.require_subcommand(1);

  auto add_threads = [&](CLI::App* c) {
    c->add_option("--threads", a.threads, "Worker threads for the deterministic parallel kernels")
        ->check(CLI::PositiveNumber);
  };
  auto add_model_shape = [&](CLI::App* c) {
    c->add_option("--model", a.model_kind, "Model family")
        ->check(CLI::IsMember({"cmma", "cvae"}));
    c->add_option("--latent-dim", a.latent_dim, "Latent dimension")->check(CLI::PositiveNumber);
    c->add_option("--f-hidden", a.f_hidden, "Prior network hidden widths, comma separated");
    c->add_option("--h-hidden", a.h_hidden, "Encoder hidden widths, comma separated");
    c->add_option("--g-hidden", a.g_hidden, "Decoder hidden widths, comma separated");
    c->add_option("--h2-hidden", a.h2_hidden, "Attribute decoder hidden widths, comma separated");
    c->add_option("--lambda-y", a.lambda_y, "Weight of the attribute reconstruction term");
    c->add_option("--recon-mode", a.recon_mode,
                  "Reconstruction density: full Gaussian (exact) or the simplified form (paper)")
        ->check(CLI::IsMember({"exact", "paper"}));
  };

  CLI::App* gen = app.add_subcommand("gen-data", "Generate a glyph dataset");
  gen->add_option("--n", a.n, "Number of instances")->required()->check(CLI::PositiveNumber);
  gen->add_option("--side", a.side, "Image edge length");
  gen->add_option("--noise", a.noise, "Pixel noise standard deviation");
  gen->add_option("--seed", a.seed, "Random seed");
  gen->add_option("--out", a.out_path, "Output dataset path")->required();

  CLI::App* tr = app.add_subcommand("train", "Train a model on a dataset");
  tr->add_option("--data", a.data_path, "Dataset path")->required();
  add_model_shape(tr);
  tr->add_option("--epochs", a.epochs, "Training epochs")->check(CLI::PositiveNumber);
  tr->add_option("--batch", a.batch, "Minibatch size")->check(CLI::PositiveNumber);
  tr->add_option("--lr", a.lr, "Adagrad learning rate");
  tr->add_option("--damping", a.damping, "Adagrad damping");
  tr->add_option("--seed", a.seed, "Random seed");
  tr->add_option("--out", a.out_path, "Final checkpoint path")->required();
  tr->add_option("--best-out", a.best_out_path, "Best-validation checkpoint path");
  add_threads(tr);

  CLI::App* eb = app.add_subcommand("eval-bound", "Mean variational bound on a split");
  eb->add_option("--ckpt", a.ckpt_path, "Checkpoint path")->required();
  eb->add_option("--data", a.data_path, "Dataset path")->required();
  eb->add_option("--split", a.split, "Split name: train, val, or test");
  eb->add_option("--eval-seed", a.eval_seed, "Seed for the evaluation noise");
  eb->add_option("--out", a.out_path, "Optional JSON report path");
  add_threads(eb);

  CLI::App* ep = app.add_subcommand("eval-parzen", "Parzen window log-likelihood on a split");
  ep->add_option("--ckpt", a.ckpt_path, "Checkpoint path")->required();
  ep->add_option("--data", a.data_path, "Dataset path")->required();
  ep->add_option("--split", a.split, "Split name: train, val, or test");
  ep->add_option("--samples", a.samples, "Generated samples per instance")
      ->check(CLI::PositiveNumber);
  ep->add_option("--sigma-grid", a.sigma_grid, "Bandwidth grid, comma separated");
  ep->add_option("--seed", a.seed, "Seed for the sampling noise");
  ep->add_option("--out", a.out_path, "Optional JSON report path");
  add_threads(ep);

  CLI::App* eo = app.add_subcommand("eval-oracle",
                                    "Quadrature log-likelihood vs the bound (latent dim <= 2)");
  eo->add_option("--ckpt", a.ckpt_path, "Checkpoint path")->required();
  eo->add_option("--data", a.data_path, "Dataset path")->required();
  eo->add_option("--split", a.split, "Split name: train, val, or test");
  eo->add_option("--nodes", a.nodes, "Quadrature nodes per latent dimension");
  eo->add_option("--limit", a.limit, "Evaluate at most this many instances (0 = all)");
  eo->add_option("--out", a.out_path, "Optional JSON report path");
  add_threads(eo);

  CLI::App* ge = app.add_subcommand("generate", "Render the image for an attribute vector");
  ge->add_option("--ckpt", a.ckpt_path, "Checkpoint path")->required();
  ge->add_option("--attrs", a.attrs, "Attribute bits, comma separated")->required();
  ge->add_option("--seed", a.seed, "Latent noise seed (0 = prior mean)")->default_val(0);
  ge->add_option("--out", a.out_path, "Output PGM path")->required();

  CLI::App* mo = app.add_subcommand("modify", "Re-render an image under new attributes");
  mo->add_option("--ckpt", a.ckpt_path, "Checkpoint path")->required();
  mo->add_option("--in", a.in_path, "Input PGM path")->required();
  mo->add_option("--attrs-old", a.attrs_old, "Current attribute bits, comma separated")
      ->required();
  mo->add_option("--attrs-new", a.attrs_new, "Target attribute bits, comma separated")
      ->required();
  mo->add_option("--out", a.out_path, "Output PGM path")->required();

  CLI::App* ia = app.add_subcommand("infer-attrs", "Infer attribute bits from an image");
  ia->add_option("--ckpt", a.ckpt_path, "Checkpoint path")->required();
  ia->add_option("--in", a.in_path, "Input PGM path")->required();
  ia->add_option("--out", a.out_path, "Optional JSON report path");

  CLI::App* lm = app.add_subcommand("latent-map", "Export prior/posterior coordinates as CSV");
  lm->add_option("--ckpt", a.ckpt_path, "Checkpoint path")->required();
  lm->add_option("--data", a.data_path, "Dataset path")->required();
  lm->add_option("--split", a.split, "Split name: train, val, or test");
  lm->add_option("--out", a.out_path, "Output CSV path")->required();

  CLI::App* gc = app.add_subcommand("gradcheck",
                                    "Compare analytic gradients with finite differences");
  add_model_shape(gc);
  gc->add_option("--x-dim", a.x_dim, "Image dimension")->check(CLI::PositiveNumber);
  gc->add_option("--y-dim", a.y_dim, "Attribute dimension")->check(CLI::PositiveNumber);
  gc->add_option("--tolerance", a.tolerance, "Maximum relative error accepted");
  gc->add_option("--trials", a.trials, "Independent random restarts")
      ->check(CLI::PositiveNumber);
  gc->add_option("--seed", a.seed, "Random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    cmma::kernels::set_threads(a.threads);
    if (gen->parsed()) return cmd_gen_data(a);
    if (tr->parsed()) return cmd_train(a);
    if (eb->parsed()) return cmd_eval_bound(a);
    if (ep->parsed()) return cmd_eval_parzen(a);
    if (eo->parsed()) return cmd_eval_oracle(a);
    if (ge->parsed()) return cmd_generate(a);
    if (mo->parsed()) return cmd_modify(a);
    if (ia->parsed()) return cmd_infer_attrs(a);
    if (lm->parsed()) return cmd_latent_map(a);
    if (gc->parsed()) return cmd_gradcheck(a);
  } catch (const CLI::ParseError& e) {
    // Flag-value validation that only runs inside a subcommand body (bit
    // lists, width lists) is still a usage error.
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const cmma::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
