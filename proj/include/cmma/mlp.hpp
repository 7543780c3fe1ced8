#pragma once

#include <string>
#include <vector>

#include "cmma/gaussian.hpp"
#include "cmma/params.hpp"
#include "cmma/rng.hpp"
#include "cmma/tape.hpp"

namespace cmma {

struct MlpSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;
  std::size_t output_dim = 0;
};

/// Fully connected stack with softplus hidden units and two parallel linear
/// output heads (mean and logvar). The raw logvar head is passed through
/// 10 tanh(r / 10): bounded to (-10, 10) with a smooth everywhere derivative
/// and exact 0 at r = 0, so zero-initialized nets emit N(0, I).
class TwoHeadMlp {
 public:
  /// Registers this net's parameters under `prefix` in creation order
  /// (hidden weights, then mean head, then logvar head). Weights are drawn
  /// N(0, 1/fan_in) from `rng`; biases start at zero. A null rng zero-fills
  /// the weights too.
  static TwoHeadMlp create(ParamSet& params, const std::string& prefix, MlpSpec spec, Rng* rng);

  /// Batched graph forward; input must be (batch x input_dim).
  GaussianVar forward(Tape& t, Var input) const;

  /// Plain forward without a tape. Accepts a length-input_dim vector or a
  /// (batch x input_dim) matrix; output tensors match the input's rank.
  GaussianDiag forward(const Tensor& input) const;

  const MlpSpec& spec() const { return spec_; }

 private:
  MlpSpec spec_;
  std::vector<Parameter*> hidden_w_, hidden_b_;
  Parameter* mu_w_ = nullptr;
  Parameter* mu_b_ = nullptr;
  Parameter* lv_w_ = nullptr;
  Parameter* lv_b_ = nullptr;
};

}  // namespace cmma
