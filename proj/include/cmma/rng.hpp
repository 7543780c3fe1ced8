#pragma once

#include <cstdint>
#include <random>

#include "cmma/tensor.hpp"

namespace cmma {

/// Deterministic random source. The generator is the standard 64-bit Mersenne
/// Twister (mt19937_64), whose output stream is fixed by the C++ standard, so
/// identical seeds give identical streams on every platform. Uniform doubles
/// take the top 53 bits of one engine output; normal variates come from the
/// Box-Muller transform (pairs generated together, the spare cached), never
/// from std::normal_distribution, whose stream is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Uniform in (0, 1]; never 0, safe under log().
  double uniform_pos() {
    return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n) {
    std::size_t v = static_cast<std::size_t>(uniform() * static_cast<double>(n));
    return v >= n ? n - 1 : v;
  }

  /// Standard normal via Box-Muller: z0 = sqrt(-2 ln u1) cos(2 pi u2),
  /// z1 = sqrt(-2 ln u1) sin(2 pi u2).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform_pos();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * kPi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  Tensor normal_tensor(std::vector<std::size_t> shape, double mean = 0.0, double stddev = 1.0) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = mean + stddev * normal();
    return t;
  }

  /// Fisher-Yates shuffle, back to front.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static constexpr double kPi = 3.14159265358979323846;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace cmma
