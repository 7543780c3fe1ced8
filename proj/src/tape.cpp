#include "cmma/tape.hpp"

#include <cassert>
#include <cmath>
#include <cstring>

#include "cmma/errors.hpp"
#include "cmma/kernels.hpp"

namespace cmma {

const Tensor& Var::value() const { return tape->value(id); }

double Var::scalar() const {
  const Tensor& v = value();
  if (!v.is_scalar()) throw ShapeError("scalar() on tensor of shape " + v.shape_str());
  return v[0];
}

Var Tape::push(Node n) {
#ifndef NDEBUG
  // Debug-mode invariant: primitives keep finite inputs finite.
  assert(n.op == Op::Leaf || n.op == Op::Param || n.value.all_finite());
#endif
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::leaf(Tensor value) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::param(Parameter& p) {
  Node n;
  n.op = Op::Param;
  n.value = p.value;
  n.param = &p;
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& A = value(a.id);
  const Tensor& B = value(b.id);
  if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.rows()) {
    throw ShapeError("matmul: incompatible shapes " + A.shape_str() + " and " + B.shape_str());
  }
  Node n;
  n.op = Op::MatMul;
  n.a = a.id;
  n.b = b.id;
  n.value = Tensor({A.rows(), B.cols()});
  kernels::matmul(A.data(), B.data(), n.value.data(), A.rows(), A.cols(), B.cols(), false);
  return push(std::move(n));
}

Var Tape::broadcast_add(Var m, Var bias) {
  const Tensor& M = value(m.id);
  const Tensor& b = value(bias.id);
  if (M.rank() != 2 || b.rank() != 1 || M.cols() != b.numel()) {
    throw ShapeError("broadcast_add: matrix " + M.shape_str() + " vs bias " + b.shape_str());
  }
  Node n;
  n.op = Op::BroadcastAdd;
  n.a = m.id;
  n.b = bias.id;
  n.value = Tensor(M.shape());
  kernels::broadcast_add(M.data(), b.data(), n.value.data(), M.rows(), M.cols());
  return push(std::move(n));
}

static void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
  }
}

Var Tape::add(Var a, Var b) {
  const Tensor& A = value(a.id);
  const Tensor& B = value(b.id);
  require_same_shape(A, B, "add");
  Node n;
  n.op = Op::Add;
  n.a = a.id;
  n.b = b.id;
  n.value = Tensor(A.shape());
  kernels::binary(kernels::Binary::Add, A.data(), B.data(), n.value.data(), A.numel());
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  const Tensor& A = value(a.id);
  const Tensor& B = value(b.id);
  require_same_shape(A, B, "sub");
  Node n;
  n.op = Op::Sub;
  n.a = a.id;
  n.b = b.id;
  n.value = Tensor(A.shape());
  kernels::binary(kernels::Binary::Sub, A.data(), B.data(), n.value.data(), A.numel());
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  const Tensor& A = value(a.id);
  const Tensor& B = value(b.id);
  require_same_shape(A, B, "mul");
  Node n;
  n.op = Op::Mul;
  n.a = a.id;
  n.b = b.id;
  n.value = Tensor(A.shape());
  kernels::binary(kernels::Binary::Mul, A.data(), B.data(), n.value.data(), A.numel());
  return push(std::move(n));
}

Var Tape::exp(Var x) {
  const Tensor& X = value(x.id);
  Node n;
  n.op = Op::Exp;
  n.a = x.id;
  n.value = Tensor(X.shape());
  kernels::unary(kernels::Unary::Exp, X.data(), n.value.data(), X.numel());
  return push(std::move(n));
}

Var Tape::square(Var x) {
  const Tensor& X = value(x.id);
  Node n;
  n.op = Op::Square;
  n.a = x.id;
  n.value = Tensor(X.shape());
  kernels::unary(kernels::Unary::Square, X.data(), n.value.data(), X.numel());
  return push(std::move(n));
}

Var Tape::softplus(Var x) {
  const Tensor& X = value(x.id);
  Node n;
  n.op = Op::Softplus;
  n.a = x.id;
  n.value = Tensor(X.shape());
  kernels::unary(kernels::Unary::Softplus, X.data(), n.value.data(), X.numel());
  return push(std::move(n));
}

Var Tape::tanh(Var x) {
  const Tensor& X = value(x.id);
  Node n;
  n.op = Op::Tanh;
  n.a = x.id;
  n.value = Tensor(X.shape());
  kernels::unary(kernels::Unary::Tanh, X.data(), n.value.data(), X.numel());
  return push(std::move(n));
}

Var Tape::sum(Var x) {
  const Tensor& X = value(x.id);
  Node n;
  n.op = Op::Sum;
  n.a = x.id;
  n.value = Tensor::scalar(kernels::sum(X.data(), X.numel()));
  return push(std::move(n));
}

Var Tape::scale(Var x, double alpha) {
  const Tensor& X = value(x.id);
  Node n;
  n.op = Op::Scale;
  n.a = x.id;
  n.alpha = alpha;
  n.value = Tensor(X.shape());
  kernels::scale(X.data(), alpha, n.value.data(), X.numel());
  return push(std::move(n));
}

// Feature axis: the only axis of a vector, the column axis of a matrix.
Var Tape::concat(Var a, Var b) {
  const Tensor& A = value(a.id);
  const Tensor& B = value(b.id);
  Node n;
  n.op = Op::Concat;
  n.a = a.id;
  n.b = b.id;
  if (A.rank() == 1 && B.rank() == 1) {
    n.value = Tensor({A.numel() + B.numel()});
    std::memcpy(n.value.data(), A.data(), A.numel() * sizeof(double));
    std::memcpy(n.value.data() + A.numel(), B.data(), B.numel() * sizeof(double));
  } else if (A.rank() == 2 && B.rank() == 2 && A.rows() == B.rows()) {
    std::size_t r = A.rows(), ca = A.cols(), cb = B.cols();
    n.value = Tensor({r, ca + cb});
    for (std::size_t i = 0; i < r; ++i) {
      std::memcpy(n.value.data() + i * (ca + cb), A.data() + i * ca, ca * sizeof(double));
      std::memcpy(n.value.data() + i * (ca + cb) + ca, B.data() + i * cb, cb * sizeof(double));
    }
  } else {
    throw ShapeError("concat: incompatible shapes " + A.shape_str() + " and " + B.shape_str());
  }
  return push(std::move(n));
}

Var Tape::slice(Var x, std::size_t lo, std::size_t hi) {
  const Tensor& X = value(x.id);
  std::size_t width = X.rank() == 1 ? X.numel() : X.cols();
  if (lo >= hi || hi > width) {
    throw ShapeError("slice: range [" + std::to_string(lo) + ", " + std::to_string(hi) +
                     ") out of bounds for " + X.shape_str());
  }
  Node n;
  n.op = Op::Slice;
  n.a = x.id;
  n.lo = lo;
  n.hi = hi;
  std::size_t w = hi - lo;
  if (X.rank() == 1) {
    n.value = Tensor({w});
    std::memcpy(n.value.data(), X.data() + lo, w * sizeof(double));
  } else {
    std::size_t r = X.rows(), c = X.cols();
    n.value = Tensor({r, w});
    for (std::size_t i = 0; i < r; ++i)
      std::memcpy(n.value.data() + i * w, X.data() + i * c + lo, w * sizeof(double));
  }
  return push(std::move(n));
}

Tensor& Tape::grad_of(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.grad_live) {
    n.grad = Tensor::zeros(n.value.shape());
    n.grad_live = true;
  }
  return n.grad;
}

void Tape::backward(Var output) {
  if (output.tape != this) throw ValueError("backward: output from a different tape");
  const Tensor& out = value(output.id);
  if (!out.is_scalar()) {
    throw ShapeError("backward: output must be scalar, got shape " + out.shape_str());
  }
  grad_of(output.id)[0] += 1.0;
  // Creation order is topological, so one reverse sweep suffices.
  for (std::size_t id = output.id + 1; id-- > 0;) {
    if (nodes_[id].grad_live) backward_node(id);
  }
  // Reset per-call grad buffers so a second backward() accumulates cleanly.
  for (Node& n : nodes_) n.grad_live = false;
}

void Tape::backward_node(std::size_t id) {
  Node& n = nodes_[id];
  const Tensor& g = n.grad;
  switch (n.op) {
    case Op::Leaf:
      break;
    case Op::Param:
      kernels::axpy(1.0, g.data(), n.param->grad.data(), g.numel());
      break;
    case Op::MatMul: {
      const Tensor& A = nodes_[n.a].value;
      const Tensor& B = nodes_[n.b].value;
      // dA += dC * B^T, dB += A^T * dC
      kernels::matmul_nt(g.data(), B.data(), grad_of(n.a).data(), A.rows(), B.cols(), A.cols(),
                         true);
      kernels::matmul_tn(A.data(), g.data(), grad_of(n.b).data(), A.rows(), A.cols(), B.cols(),
                         true);
      break;
    }
    case Op::BroadcastAdd: {
      const Tensor& M = nodes_[n.a].value;
      kernels::axpy(1.0, g.data(), grad_of(n.a).data(), g.numel());
      kernels::colsum_acc(g.data(), grad_of(n.b).data(), M.rows(), M.cols());
      break;
    }
    case Op::Add:
      kernels::axpy(1.0, g.data(), grad_of(n.a).data(), g.numel());
      kernels::axpy(1.0, g.data(), grad_of(n.b).data(), g.numel());
      break;
    case Op::Sub:
      kernels::axpy(1.0, g.data(), grad_of(n.a).data(), g.numel());
      kernels::axpy(-1.0, g.data(), grad_of(n.b).data(), g.numel());
      break;
    case Op::Mul:
      kernels::mul_acc(g.data(), nodes_[n.b].value.data(), grad_of(n.a).data(), g.numel());
      kernels::mul_acc(g.data(), nodes_[n.a].value.data(), grad_of(n.b).data(), g.numel());
      break;
    case Op::Exp:
      kernels::unary_bwd(kernels::Unary::Exp, nodes_[n.a].value.data(), n.value.data(), g.data(),
                         grad_of(n.a).data(), g.numel());
      break;
    case Op::Square:
      kernels::unary_bwd(kernels::Unary::Square, nodes_[n.a].value.data(), n.value.data(),
                         g.data(), grad_of(n.a).data(), g.numel());
      break;
    case Op::Softplus:
      kernels::unary_bwd(kernels::Unary::Softplus, nodes_[n.a].value.data(), n.value.data(),
                         g.data(), grad_of(n.a).data(), g.numel());
      break;
    case Op::Tanh:
      kernels::unary_bwd(kernels::Unary::Tanh, nodes_[n.a].value.data(), n.value.data(), g.data(),
                         grad_of(n.a).data(), g.numel());
      break;
    case Op::Sum: {
      Tensor& da = grad_of(n.a);
      double gv = g[0];
      for (std::size_t i = 0; i < da.numel(); ++i) da[i] += gv;
      break;
    }
    case Op::Scale:
      kernels::axpy(n.alpha, g.data(), grad_of(n.a).data(), g.numel());
      break;
    case Op::Concat: {
      const Tensor& A = nodes_[n.a].value;
      const Tensor& B = nodes_[n.b].value;
      Tensor& da = grad_of(n.a);
      Tensor& db = grad_of(n.b);
      if (A.rank() == 1) {
        kernels::axpy(1.0, g.data(), da.data(), A.numel());
        kernels::axpy(1.0, g.data() + A.numel(), db.data(), B.numel());
      } else {
        std::size_t r = A.rows(), ca = A.cols(), cb = B.cols();
        for (std::size_t i = 0; i < r; ++i) {
          kernels::axpy_serial(1.0, g.data() + i * (ca + cb), da.data() + i * ca, ca);
          kernels::axpy_serial(1.0, g.data() + i * (ca + cb) + ca, db.data() + i * cb, cb);
        }
      }
      break;
    }
    case Op::Slice: {
      const Tensor& X = nodes_[n.a].value;
      Tensor& dx = grad_of(n.a);
      std::size_t w = n.hi - n.lo;
      if (X.rank() == 1) {
        kernels::axpy_serial(1.0, g.data(), dx.data() + n.lo, w);
      } else {
        std::size_t r = X.rows(), c = X.cols();
        for (std::size_t i = 0; i < r; ++i)
          kernels::axpy_serial(1.0, g.data() + i * w, dx.data() + i * c + n.lo, w);
      }
      break;
    }
  }
}

void Tape::clear() { nodes_.clear(); }

std::vector<Tensor> finite_difference_gradient(const std::function<double()>& loss,
                                               ParamSet& params, double eps) {
  if (!(eps > 0.0)) throw ValueError("finite_difference_gradient: eps must be positive");
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& v = params[p].value;
    Tensor g = Tensor::zeros(v.shape());
    for (std::size_t i = 0; i < v.numel(); ++i) {
      double saved = v[i];
      v[i] = saved + eps;
      double up = loss();
      v[i] = saved - eps;
      double down = loss();
      v[i] = saved;
      g[i] = (up - down) / (2.0 * eps);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

double gradient_rel_error(double a, double b, double floor) {
  double denom = std::max({std::abs(a), std::abs(b), floor});
  return std::abs(a - b) / denom;
}

}  // namespace cmma
