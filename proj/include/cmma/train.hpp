#pragma once

#include <memory>
#include <string>
#include <vector>

#include "cmma/data.hpp"
#include "cmma/model.hpp"
#include "cmma/params.hpp"

namespace cmma {

struct AdagradState {
  std::vector<Tensor> accum;  // one per parameter, ParamSet order
  double lr = 0.01;
  double damping = 1e-8;

  void init(const ParamSet& params);
  bool initialized() const { return !accum.empty(); }
};

/// G += g^2; theta -= lr * g / (sqrt(G) + damping), elementwise, reading
/// each parameter's grad field.
void adagrad_step(ParamSet& params, AdagradState& state);

struct TrainConfig {
  std::string model_kind = "cmma";  // "cmma" or "cvae"
  std::size_t epochs = 200;
  std::size_t batch = 100;
  double lr = 0.01;
  double damping = 1e-8;
  std::uint64_t seed = 1;
  ModelConfig model;  // x_dim and y_dim are filled in from the dataset

  void validate() const;
};

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double train_bound = 0.0;
  double train_recon = 0.0;
  double train_kl = 0.0;
  double train_y_term = 0.0;
  double val_bound = 0.0;
};

struct Checkpoint {
  int format_version = 1;
  TrainConfig config;
  std::vector<std::pair<std::string, Tensor>> params;
  bool has_adagrad = false;
  AdagradState adagrad;
  Tensor y_mean;
  EpochMetrics final_metrics;
};

struct TrainOutput {
  Checkpoint final_state;
  Checkpoint best_state;  // highest validation bound, earliest on ties
  std::vector<EpochMetrics> log;
};

/// Seeded end to end: Rng(seed) drives init, then per-epoch shuffles and
/// per-batch noise draws in that order; every per-epoch validation pass uses
/// a fresh Rng(seed + 1) so its noise is identical across epochs. Aborts
/// with epoch and batch indices if the loss leaves the finite range.
TrainOutput train(const MultimodalDataset& data, const TrainConfig& cfg);

void save_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Either cmma or cvae is set, matching the checkpoint's model kind, with
/// parameter values and y_mean restored.
struct LoadedModel {
  TrainConfig config;
  std::unique_ptr<CmmaModel> cmma;
  std::unique_ptr<CvaeModel> cvae;
};
LoadedModel instantiate(const Checkpoint& c);

struct GradCheckBlock {
  std::string block;  // parameter-name prefix before the first dot
  double max_rel_error = 0.0;
};
struct GradCheckReport {
  std::vector<GradCheckBlock> blocks;
  double max_rel_error = 0.0;
  bool passed = false;
};

/// Compares backward() gradients of the full bound (frozen noise) against
/// central finite differences over `trials` freshly initialized models.
/// cfg.model dimensions are used as given; keep them small.
GradCheckReport grad_check(const TrainConfig& cfg, double tolerance, std::size_t trials);

}  // namespace cmma
