#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "cmma/params.hpp"
#include "cmma/tensor.hpp"

namespace cmma {

class Tape;

/// Handle to one node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  double scalar() const;
};

/// Define-by-run record of primitive applications. Nodes are appended in
/// execution order, which is therefore already topological: every input of
/// record k was produced by a record < k or is a leaf. A tape is rebuilt per
/// minibatch and confined to one thread.
class Tape {
 public:
  enum class Op : std::uint8_t {
    Leaf,        // constant input
    Param,       // leaf bound to a Parameter; backward adds into its grad
    MatMul,      // (m x k) * (k x n)
    BroadcastAdd,  // matrix + row-vector bias
    Add,
    Sub,
    Mul,         // elementwise
    Exp,
    Square,
    Softplus,
    Tanh,
    Sum,         // full reduction to shape {1}
    Scale,       // alpha * x
    Concat,      // along the feature axis
    Slice,       // along the feature axis
  };

  Var leaf(Tensor value);
  Var param(Parameter& p);

  Var matmul(Var a, Var b);
  Var broadcast_add(Var m, Var bias);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var exp(Var x);
  Var square(Var x);
  Var softplus(Var x);
  Var tanh(Var x);
  Var sum(Var x);
  Var scale(Var x, double alpha);
  Var concat(Var a, Var b);
  Var slice(Var x, std::size_t lo, std::size_t hi);

  /// Reverse pass from a scalar-shaped output. Gradients accumulate
  /// additively across multiple uses of a node, and each reached Parameter
  /// receives += d(output)/d(value) into its grad. Non-parameter leaves are
  /// untouched. May be called for several outputs on one tape; parameter
  /// grads then add up.
  void backward(Var output);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  std::size_t size() const { return nodes_.size(); }
  void clear();

 private:
  struct Node {
    Op op;
    std::size_t a = 0;
    std::size_t b = 0;
    double alpha = 0.0;              // Scale factor
    std::size_t lo = 0, hi = 0;      // Slice range
    Tensor value;
    Tensor grad;                     // allocated on first touch during backward
    bool grad_live = false;
    Parameter* param = nullptr;      // Param leaves only
  };

  Var push(Node n);
  Tensor& grad_of(std::size_t id);
  void backward_node(std::size_t id);

  std::vector<Node> nodes_;
};

/// Central finite differences of `loss` over every coordinate of every
/// parameter in `params`: (loss(th + eps e_i) - loss(th - eps e_i)) / (2 eps).
/// `loss` must be deterministic (freeze any noise inputs) and is re-evaluated
/// 2 x scalar_count times. Returns per-parameter gradient tensors in ParamSet
/// order.
std::vector<Tensor> finite_difference_gradient(const std::function<double()>& loss,
                                               ParamSet& params, double eps);

/// |a - b| / max(|a|, |b|, floor): relative where gradients are sizeable,
/// absolute against `floor` where both are tiny.
double gradient_rel_error(double a, double b, double floor = 1e-4);

}  // namespace cmma
