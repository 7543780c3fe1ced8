#include "cmma/mlp.hpp"

#include <cmath>

#include "cmma/errors.hpp"
#include "cmma/kernels.hpp"

namespace cmma {

namespace {
Tensor init_weight(std::size_t fan_in, std::size_t fan_out, Rng* rng) {
  if (!rng) return Tensor({fan_in, fan_out});
  return rng->normal_tensor({fan_in, fan_out}, 0.0, 1.0 / std::sqrt(static_cast<double>(fan_in)));
}
}  // namespace

TwoHeadMlp TwoHeadMlp::create(ParamSet& params, const std::string& prefix, MlpSpec spec,
                              Rng* rng) {
  if (spec.input_dim == 0 || spec.output_dim == 0) {
    throw ValueError("TwoHeadMlp " + prefix + ": zero input or output width");
  }
  for (std::size_t w : spec.hidden) {
    if (w == 0) throw ValueError("TwoHeadMlp " + prefix + ": zero hidden width");
  }
  TwoHeadMlp net;
  net.spec_ = std::move(spec);
  std::size_t in = net.spec_.input_dim;
  for (std::size_t i = 0; i < net.spec_.hidden.size(); ++i) {
    std::size_t out = net.spec_.hidden[i];
    std::string layer = prefix + ".h" + std::to_string(i + 1);
    net.hidden_w_.push_back(&params.add(layer + ".W", init_weight(in, out, rng)));
    net.hidden_b_.push_back(&params.add(layer + ".b", Tensor({out})));
    in = out;
  }
  std::size_t d = net.spec_.output_dim;
  net.mu_w_ = &params.add(prefix + ".mu.W", init_weight(in, d, rng));
  net.mu_b_ = &params.add(prefix + ".mu.b", Tensor({d}));
  net.lv_w_ = &params.add(prefix + ".lv.W", init_weight(in, d, rng));
  net.lv_b_ = &params.add(prefix + ".lv.b", Tensor({d}));
  return net;
}

GaussianVar TwoHeadMlp::forward(Tape& t, Var input) const {
  const Tensor& v = input.value();
  if (v.rank() != 2 || v.cols() != spec_.input_dim) {
    throw ShapeError("TwoHeadMlp: expected batch x " + std::to_string(spec_.input_dim) +
                     " input, got " + v.shape_str());
  }
  Var h = input;
  for (std::size_t i = 0; i < hidden_w_.size(); ++i) {
    h = t.softplus(t.broadcast_add(t.matmul(h, t.param(*hidden_w_[i])), t.param(*hidden_b_[i])));
  }
  Var mu = t.broadcast_add(t.matmul(h, t.param(*mu_w_)), t.param(*mu_b_));
  Var raw = t.broadcast_add(t.matmul(h, t.param(*lv_w_)), t.param(*lv_b_));
  Var lv = t.scale(t.tanh(t.scale(raw, 0.1)), 10.0);
  return {mu, lv};
}

GaussianDiag TwoHeadMlp::forward(const Tensor& input) const {
  bool vector_in = input.rank() == 1;
  std::size_t b = vector_in ? 1 : input.rows();
  std::size_t in_dim = vector_in ? input.numel() : input.cols();
  if (in_dim != spec_.input_dim) {
    throw ShapeError("TwoHeadMlp: expected " + std::to_string(spec_.input_dim) +
                     " input features, got " + input.shape_str());
  }
  Tensor h = vector_in ? input.reshaped({1, in_dim}) : input;
  for (std::size_t i = 0; i < hidden_w_.size(); ++i) {
    const Tensor& w = hidden_w_[i]->value;
    Tensor next({b, w.cols()});
    kernels::matmul(h.data(), w.data(), next.data(), b, w.rows(), w.cols(), false);
    kernels::broadcast_add(next.data(), hidden_b_[i]->value.data(), next.data(), b, w.cols());
    kernels::unary(kernels::Unary::Softplus, next.data(), next.data(), next.numel());
    h = std::move(next);
  }
  std::size_t d = spec_.output_dim;
  Tensor mu({b, d}), lv({b, d});
  kernels::matmul(h.data(), mu_w_->value.data(), mu.data(), b, mu_w_->value.rows(), d, false);
  kernels::broadcast_add(mu.data(), mu_b_->value.data(), mu.data(), b, d);
  kernels::matmul(h.data(), lv_w_->value.data(), lv.data(), b, lv_w_->value.rows(), d, false);
  kernels::broadcast_add(lv.data(), lv_b_->value.data(), lv.data(), b, d);
  for (std::size_t i = 0; i < lv.numel(); ++i) lv[i] = 10.0 * std::tanh(0.1 * lv[i]);
  if (vector_in) return GaussianDiag(mu.reshaped({d}), lv.reshaped({d}));
  return GaussianDiag(std::move(mu), std::move(lv));
}

}  // namespace cmma
