#include "cmma/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

namespace cmma::kernels {

namespace {
int g_threads = 1;
// Work below this size is not worth forking a team for.
constexpr std::size_t kParGrain = 4096;
constexpr std::size_t kSumBlock = 1024;
}  // namespace

void set_threads(int n) {
  g_threads = std::max(1, n);
  omp_set_num_threads(g_threads);
}

int threads() { return g_threads; }

bool parallel_enabled() { return g_threads > 1; }

double softplus_scalar(double x) {
  // log(1 + e^x) in the overflow-safe form max(x,0) + log1p(e^-|x|)
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

// ---- matmul -----------------------------------------------------------------

// i-k-j order: each C[i][j] accumulates over ascending k, rows independent.
static inline void matmul_row(const double* a, const double* b, double* c, std::size_t i,
                              std::size_t k, std::size_t n, bool accumulate) {
  double* crow = c + i * n;
  if (!accumulate) std::memset(crow, 0, n * sizeof(double));
  const double* arow = a + i * k;
  for (std::size_t kk = 0; kk < k; ++kk) {
    double av = arow[kk];
    const double* brow = b + kk * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

void matmul_serial(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) matmul_row(a, b, c, i, k, n, accumulate);
}

void matmul_par(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                std::size_t n, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i)
    matmul_row(a, b, c, static_cast<std::size_t>(i), k, n, accumulate);
}

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n, bool accumulate) {
  if (parallel_enabled() && m > 1 && m * k * n >= kParGrain)
    matmul_par(a, b, c, m, k, n, accumulate);
  else
    matmul_serial(a, b, c, m, k, n, accumulate);
}

static inline void matmul_nt_row(const double* a, const double* b, double* c, std::size_t i,
                                 std::size_t k, std::size_t n, bool accumulate) {
  const double* arow = a + i * k;
  double* crow = c + i * n;
  for (std::size_t j = 0; j < n; ++j) {
    const double* brow = b + j * k;
    double acc = 0.0;
    for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
    if (accumulate)
      crow[j] += acc;
    else
      crow[j] = acc;
  }
}

void matmul_nt_serial(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                      std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) matmul_nt_row(a, b, c, i, k, n, accumulate);
}

void matmul_nt_par(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i)
    matmul_nt_row(a, b, c, static_cast<std::size_t>(i), k, n, accumulate);
}

void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
  if (parallel_enabled() && m > 1 && m * k * n >= kParGrain)
    matmul_nt_par(a, b, c, m, k, n, accumulate);
  else
    matmul_nt_serial(a, b, c, m, k, n, accumulate);
}

// C(k x n) = A(m x k)^T * B(m x n); C[i][j] accumulates over ascending row r.
static inline void matmul_tn_col(const double* a, const double* b, double* c, std::size_t i,
                                 std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  double* crow = c + i * n;
  if (!accumulate) std::memset(crow, 0, n * sizeof(double));
  for (std::size_t r = 0; r < m; ++r) {
    double av = a[r * k + i];
    const double* brow = b + r * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

void matmul_tn_serial(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                      std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < k; ++i) matmul_tn_col(a, b, c, i, m, k, n, accumulate);
}

void matmul_tn_par(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(k); ++i)
    matmul_tn_col(a, b, c, static_cast<std::size_t>(i), m, k, n, accumulate);
}

void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
  if (parallel_enabled() && k > 1 && m * k * n >= kParGrain)
    matmul_tn_par(a, b, c, m, k, n, accumulate);
  else
    matmul_tn_serial(a, b, c, m, k, n, accumulate);
}

// ---- elementwise ------------------------------------------------------------

static inline double unary_apply(Unary op, double x) {
  switch (op) {
    case Unary::Exp: return std::exp(x);
    case Unary::Softplus: return softplus_scalar(x);
    case Unary::Tanh: return std::tanh(x);
    case Unary::Square: return x * x;
  }
  return 0.0;
}

void unary_serial(Unary op, const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = unary_apply(op, x[i]);
}

void unary_par(Unary op, const double* x, double* out, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
    out[i] = unary_apply(op, x[i]);
}

void unary(Unary op, const double* x, double* out, std::size_t n) {
  if (parallel_enabled() && n >= kParGrain)
    unary_par(op, x, out, n);
  else
    unary_serial(op, x, out, n);
}

static inline double unary_grad(Unary op, double x, double y) {
  switch (op) {
    case Unary::Exp: return y;                     // d e^x = e^x (saved output)
    case Unary::Softplus: return sigmoid_scalar(x);
    case Unary::Tanh: return 1.0 - y * y;
    case Unary::Square: return 2.0 * x;
  }
  return 0.0;
}

void unary_bwd_serial(Unary op, const double* x, const double* y, const double* dy, double* dx,
                      std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dx[i] += dy[i] * unary_grad(op, x[i], y[i]);
}

void unary_bwd_par(Unary op, const double* x, const double* y, const double* dy, double* dx,
                   std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
    dx[i] += dy[i] * unary_grad(op, x[i], y[i]);
}

void unary_bwd(Unary op, const double* x, const double* y, const double* dy, double* dx,
               std::size_t n) {
  if (parallel_enabled() && n >= kParGrain)
    unary_bwd_par(op, x, y, dy, dx, n);
  else
    unary_bwd_serial(op, x, y, dy, dx, n);
}

static inline double binary_apply(Binary op, double a, double b) {
  switch (op) {
    case Binary::Add: return a + b;
    case Binary::Sub: return a - b;
    case Binary::Mul: return a * b;
  }
  return 0.0;
}

void binary_serial(Binary op, const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = binary_apply(op, a[i], b[i]);
}

void binary_par(Binary op, const double* a, const double* b, double* out, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
    out[i] = binary_apply(op, a[i], b[i]);
}

void binary(Binary op, const double* a, const double* b, double* out, std::size_t n) {
  if (parallel_enabled() && n >= kParGrain)
    binary_par(op, a, b, out, n);
  else
    binary_serial(op, a, b, out, n);
}

void axpy_serial(double alpha, const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] += alpha * x[i];
}

void axpy_par(double alpha, const double* x, double* out, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) out[i] += alpha * x[i];
}

void axpy(double alpha, const double* x, double* out, std::size_t n) {
  if (parallel_enabled() && n >= kParGrain)
    axpy_par(alpha, x, out, n);
  else
    axpy_serial(alpha, x, out, n);
}

void mul_acc_serial(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] += a[i] * b[i];
}

void mul_acc_par(const double* a, const double* b, double* out, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) out[i] += a[i] * b[i];
}

void mul_acc(const double* a, const double* b, double* out, std::size_t n) {
  if (parallel_enabled() && n >= kParGrain)
    mul_acc_par(a, b, out, n);
  else
    mul_acc_serial(a, b, out, n);
}

void scale_serial(const double* x, double alpha, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}

void scale_par(const double* x, double alpha, double* out, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) out[i] = alpha * x[i];
}

void scale(const double* x, double alpha, double* out, std::size_t n) {
  if (parallel_enabled() && n >= kParGrain)
    scale_par(x, alpha, out, n);
  else
    scale_serial(x, alpha, out, n);
}

void broadcast_add_serial(const double* m, const double* bias, double* out, std::size_t r,
                          std::size_t c) {
  for (std::size_t i = 0; i < r; ++i) {
    const double* mrow = m + i * c;
    double* orow = out + i * c;
    for (std::size_t j = 0; j < c; ++j) orow[j] = mrow[j] + bias[j];
  }
}

void broadcast_add_par(const double* m, const double* bias, double* out, std::size_t r,
                       std::size_t c) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(r); ++i) {
    const double* mrow = m + i * c;
    double* orow = out + i * c;
    for (std::size_t j = 0; j < c; ++j) orow[j] = mrow[j] + bias[j];
  }
}

void broadcast_add(const double* m, const double* bias, double* out, std::size_t r,
                   std::size_t c) {
  if (parallel_enabled() && r * c >= kParGrain)
    broadcast_add_par(m, bias, out, r, c);
  else
    broadcast_add_serial(m, bias, out, r, c);
}

// Each output column accumulates its rows in ascending order.
void colsum_acc_serial(const double* m, double* out, std::size_t r, std::size_t c) {
  for (std::size_t j = 0; j < c; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < r; ++i) acc += m[i * c + j];
    out[j] += acc;
  }
}

void colsum_acc_par(const double* m, double* out, std::size_t r, std::size_t c) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(c); ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < r; ++i) acc += m[i * c + j];
    out[j] += acc;
  }
}

void colsum_acc(const double* m, double* out, std::size_t r, std::size_t c) {
  if (parallel_enabled() && r * c >= kParGrain)
    colsum_acc_par(m, out, r, c);
  else
    colsum_acc_serial(m, out, r, c);
}

// ---- reduction --------------------------------------------------------------

static inline double sum_block(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

double sum_serial(const double* x, std::size_t n) {
  std::size_t blocks = (n + kSumBlock - 1) / kSumBlock;
  double total = 0.0;
  for (std::size_t b = 0; b < blocks; ++b) {
    std::size_t lo = b * kSumBlock;
    total += sum_block(x + lo, std::min(kSumBlock, n - lo));
  }
  return total;
}

double sum_par(const double* x, std::size_t n) {
  std::size_t blocks = (n + kSumBlock - 1) / kSumBlock;
  std::vector<double> partial(blocks);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(blocks); ++b) {
    std::size_t lo = static_cast<std::size_t>(b) * kSumBlock;
    partial[b] = sum_block(x + lo, std::min(kSumBlock, n - lo));
  }
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

double sum(const double* x, std::size_t n) {
  if (parallel_enabled() && n >= 2 * kSumBlock) return sum_par(x, n);
  return sum_serial(x, n);
}

}  // namespace cmma::kernels
