#pragma once

#include <cstddef>

namespace cmma::kernels {

// Every kernel exists in a _serial reference form and an OpenMP _par form.
// Both compute each output element with the identical accumulation order
// (ascending k in the matmuls, fixed 1024-element blocks in the reductions),
// so the parallel results are bitwise equal to the serial ones for any thread
// count. The dispatching wrappers pick the parallel form when set_threads()
// enabled more than one thread.

void set_threads(int n);  // n >= 1; also forwards to omp_set_num_threads
int threads();
bool parallel_enabled();

// C(m x n) = A(m x k) * B(k x n); accumulate adds into C instead of overwriting.
void matmul_serial(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n, bool accumulate);
void matmul_par(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                std::size_t n, bool accumulate);
void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n, bool accumulate);

// C(m x n) = A(m x k) * B(n x k)^T
void matmul_nt_serial(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                      std::size_t n, bool accumulate);
void matmul_nt_par(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n, bool accumulate);
void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate);

// C(k x n) = A(m x k)^T * B(m x n)
void matmul_tn_serial(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                      std::size_t n, bool accumulate);
void matmul_tn_par(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n, bool accumulate);
void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate);

enum class Unary { Exp, Softplus, Tanh, Square };

void unary_serial(Unary op, const double* x, double* out, std::size_t n);
void unary_par(Unary op, const double* x, double* out, std::size_t n);
void unary(Unary op, const double* x, double* out, std::size_t n);

// out += dy * d(op)/dx, evaluated from the saved forward input x and output y.
void unary_bwd_serial(Unary op, const double* x, const double* y, const double* dy, double* dx,
                      std::size_t n);
void unary_bwd_par(Unary op, const double* x, const double* y, const double* dy, double* dx,
                   std::size_t n);
void unary_bwd(Unary op, const double* x, const double* y, const double* dy, double* dx,
               std::size_t n);

enum class Binary { Add, Sub, Mul };

void binary_serial(Binary op, const double* a, const double* b, double* out, std::size_t n);
void binary_par(Binary op, const double* a, const double* b, double* out, std::size_t n);
void binary(Binary op, const double* a, const double* b, double* out, std::size_t n);

// out += alpha * x
void axpy_serial(double alpha, const double* x, double* out, std::size_t n);
void axpy_par(double alpha, const double* x, double* out, std::size_t n);
void axpy(double alpha, const double* x, double* out, std::size_t n);

// out += a .* b
void mul_acc_serial(const double* a, const double* b, double* out, std::size_t n);
void mul_acc_par(const double* a, const double* b, double* out, std::size_t n);
void mul_acc(const double* a, const double* b, double* out, std::size_t n);

void scale_serial(const double* x, double alpha, double* out, std::size_t n);
void scale_par(const double* x, double alpha, double* out, std::size_t n);
void scale(const double* x, double alpha, double* out, std::size_t n);

// out(r x c) = m(r x c) + bias(c) broadcast over rows
void broadcast_add_serial(const double* m, const double* bias, double* out, std::size_t r,
                          std::size_t c);
void broadcast_add_par(const double* m, const double* bias, double* out, std::size_t r,
                       std::size_t c);
void broadcast_add(const double* m, const double* bias, double* out, std::size_t r, std::size_t c);

// out(c) += column sums of m(r x c); rows accumulated in ascending order
void colsum_acc_serial(const double* m, double* out, std::size_t r, std::size_t c);
void colsum_acc_par(const double* m, double* out, std::size_t r, std::size_t c);
void colsum_acc(const double* m, double* out, std::size_t r, std::size_t c);

// Full reduction. The summation order is canonical regardless of thread
// count: 1024-element blocks summed left-to-right, block totals combined in
// ascending block order.
double sum_serial(const double* x, std::size_t n);
double sum_par(const double* x, std::size_t n);
double sum(const double* x, std::size_t n);

double softplus_scalar(double x);
double sigmoid_scalar(double x);

}  // namespace cmma::kernels
