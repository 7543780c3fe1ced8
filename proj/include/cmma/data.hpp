#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cmma/rng.hpp"
#include "cmma/tensor.hpp"

namespace cmma {

/// Attribute bit layout (fixed contract):
///   bit0 shape: 0 = filled axis-aligned square, 1 = filled disc
///   bit1 size: half-width/radius round(0.19 s) vs round(0.31 s)
///   bit2 horizontal center: column round(0.31 s) vs round(0.63 s)
///   bit3 vertical center: row likewise
///   bit4 intensity: 0.5 vs 1.0
///   bit5 frame: 1-pixel canvas border at half the intensity
///   bit6 haze: +0.1 on every pixel
///   bit7 hollow: 1-pixel outline instead of the filled shape
constexpr std::size_t kAttributeCount = 8;

struct GlyphConfig {
  std::size_t side = 16;       // image is side x side, so m = side^2
  double noise_sigma = 0.05;   // per-pixel N(0, sigma^2), then clip to [0,1]
  std::uint64_t seed = 0;

  void validate() const;  // side >= 8, 0 <= noise_sigma < 0.5
};

/// Paired images and attributes with index splits. All values are stored
/// f32-quantized so that file round-trips are bitwise exact.
struct MultimodalDataset {
  Tensor X;  // n x m, pixels in [0, 1]
  Tensor Y;  // n x A, entries 0 or 1
  std::vector<std::uint32_t> train_idx, val_idx, test_idx;

  std::size_t n() const { return X.rows(); }
  std::size_t m() const { return X.cols(); }
  std::size_t a() const { return Y.cols(); }
  std::size_t side() const;  // sqrt(m); rejects non-square m

  const std::vector<std::uint32_t>& split(const std::string& name) const;
};

/// Deterministic render of one glyph. Draw order: shape at intensity v, then
/// the frame border overwrites at v/2, then haze adds 0.1, then per-pixel
/// noise in row-major order (when rng is given), then clip to [0, 1].
Tensor render_glyph(const Tensor& y, const GlyphConfig& cfg, Rng* rng);

/// n instances: per instance the rng first draws 8 fair bits, then the
/// render's pixel noise. Split 80/10/10 in index order.
MultimodalDataset generate_dataset(std::size_t n, const GlyphConfig& cfg);

struct OracleReading {
  std::array<int, kAttributeCount> bits{};
  std::array<double, kAttributeCount> confidence{};
};

/// Rule-based attribute reader; `side` is the image edge length. Exact on
/// noiseless renders (qualified 256/256 in the test suite) and stable under
/// the default noise level.
OracleReading attribute_oracle(const Tensor& x, std::size_t side);

void save_dataset(const MultimodalDataset& d, const std::string& path);
MultimodalDataset load_dataset(const std::string& path);

/// Binary PGM (P5), maxval 255, pixel = round(255 * value).
void save_pgm(const Tensor& image, std::size_t side, const std::string& path);
Tensor load_pgm(const std::string& path, std::size_t& side_out);

/// Round a tensor's entries to their nearest f32 values (in-place copy
/// semantics: returns the quantized tensor).
Tensor quantize_f32(Tensor t);

}  // namespace cmma
