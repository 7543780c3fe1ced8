// Serial reference kernels vs their OpenMP counterparts on training-sized
// shapes. The parallel forms are bitwise-equal by construction, so the only
// question here is throughput.
#include <benchmark/benchmark.h>
#include <omp.h>

#include <vector>

#include "cmma/kernels.hpp"
#include "cmma/rng.hpp"

using namespace cmma;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

void bm_matmul_serial(benchmark::State& state) {
  std::size_t m = state.range(0), k = state.range(1), n = state.range(2);
  auto a = random_vec(m * k, 1), b = random_vec(k * n, 2);
  std::vector<double> c(m * n);
  for (auto _ : state) {
    kernels::matmul_serial(a.data(), b.data(), c.data(), m, k, n, false);
    benchmark::DoNotOptimize(c.data());
  }
}

void bm_matmul_par(benchmark::State& state) {
  std::size_t m = state.range(0), k = state.range(1), n = state.range(2);
  auto a = random_vec(m * k, 1), b = random_vec(k * n, 2);
  std::vector<double> c(m * n);
  for (auto _ : state) {
    kernels::matmul_par(a.data(), b.data(), c.data(), m, k, n, false);
    benchmark::DoNotOptimize(c.data());
  }
}

void bm_softplus_serial(benchmark::State& state) {
  std::size_t n = state.range(0);
  auto x = random_vec(n, 3);
  std::vector<double> y(n);
  for (auto _ : state) {
    kernels::unary_serial(kernels::Unary::Softplus, x.data(), y.data(), n);
    benchmark::DoNotOptimize(y.data());
  }
}

void bm_softplus_par(benchmark::State& state) {
  std::size_t n = state.range(0);
  auto x = random_vec(n, 3);
  std::vector<double> y(n);
  for (auto _ : state) {
    kernels::unary_par(kernels::Unary::Softplus, x.data(), y.data(), n);
    benchmark::DoNotOptimize(y.data());
  }
}

void bm_sum_serial(benchmark::State& state) {
  std::size_t n = state.range(0);
  auto x = random_vec(n, 4);
  for (auto _ : state) {
    double s = kernels::sum_serial(x.data(), n);
    benchmark::DoNotOptimize(s);
  }
}

void bm_sum_par(benchmark::State& state) {
  std::size_t n = state.range(0);
  auto x = random_vec(n, 4);
  for (auto _ : state) {
    double s = kernels::sum_par(x.data(), n);
    benchmark::DoNotOptimize(s);
  }
}

}  // namespace

// Batch-of-100 through a 512-unit layer, both directions.
BENCHMARK(bm_matmul_serial)->Args({100, 256, 512})->Args({100, 512, 256});
BENCHMARK(bm_matmul_par)->Args({100, 256, 512})->Args({100, 512, 256});
BENCHMARK(bm_softplus_serial)->Arg(100 * 512);
BENCHMARK(bm_softplus_par)->Arg(100 * 512);
BENCHMARK(bm_sum_serial)->Arg(1 << 20);
BENCHMARK(bm_sum_par)->Arg(1 << 20);

int main(int argc, char** argv) {
  cmma::kernels::set_threads(omp_get_max_threads() > 1 ? omp_get_max_threads() : 2);
  benchmark::Initialize(&argc, argv);
  benchmark::RunSpecifiedBenchmarks();
  return 0;
}
