#include "cmma/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include "cmma/errors.hpp"

namespace cmma {

void GlyphConfig::validate() const {
  if (side < 8) throw ValueError("GlyphConfig: side must be at least 8");
  if (!(noise_sigma >= 0.0 && noise_sigma < 0.5)) {
    throw ValueError("GlyphConfig: noise_sigma must lie in [0, 0.5)");
  }
}

std::size_t MultimodalDataset::side() const {
  auto s = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(m()))));
  if (s * s != m()) throw ValueError("dataset images are not square");
  return s;
}

const std::vector<std::uint32_t>& MultimodalDataset::split(const std::string& name) const {
  if (name == "train") return train_idx;
  if (name == "val") return val_idx;
  if (name == "test") return test_idx;
  throw ValueError("unknown split '" + name + "' (expected train, val, or test)");
}

namespace {

struct Geometry {
  long r, cx, cy;
  double v;
  bool square, frame, haze, hollow;
};

Geometry decode_bits(const Tensor& y, const GlyphConfig& cfg) {
  if (y.numel() != kAttributeCount) {
    throw ValueError("render_glyph: expected " + std::to_string(kAttributeCount) +
                     " attribute bits, got " + y.shape_str());
  }
  bool b[kAttributeCount];
  for (std::size_t j = 0; j < kAttributeCount; ++j) {
    if (y[j] != 0.0 && y[j] != 1.0) {
      throw ValueError("render_glyph: attribute " + std::to_string(j) + " is " +
                       std::to_string(y[j]) + ", not a bit");
    }
    b[j] = y[j] == 1.0;
  }
  double s = static_cast<double>(cfg.side);
  Geometry g;
  g.square = !b[0];
  g.r = std::lround(b[1] ? 0.31 * s : 0.19 * s);
  g.cx = std::lround(b[2] ? 0.63 * s : 0.31 * s);
  g.cy = std::lround(b[3] ? 0.63 * s : 0.31 * s);
  g.v = b[4] ? 1.0 : 0.5;
  g.frame = b[5];
  g.haze = b[6];
  g.hollow = b[7];
  return g;
}

bool shape_covers(const Geometry& g, long row, long col) {
  long dr = row - g.cy, dc = col - g.cx;
  if (g.square) {
    long cheb = std::max(std::labs(dr), std::labs(dc));
    return g.hollow ? cheb == g.r : cheb <= g.r;
  }
  long d2 = dr * dr + dc * dc;
  if (g.hollow) return d2 <= g.r * g.r && d2 > (g.r - 1) * (g.r - 1);
  return d2 <= g.r * g.r;
}

}  // namespace

Tensor render_glyph(const Tensor& y, const GlyphConfig& cfg, Rng* rng) {
  cfg.validate();
  Geometry g = decode_bits(y, cfg);
  long s = static_cast<long>(cfg.side);
  Tensor img({cfg.side * cfg.side});
  for (long row = 0; row < s; ++row) {
    for (long col = 0; col < s; ++col) {
      if (shape_covers(g, row, col)) img[row * s + col] = g.v;
    }
  }
  if (g.frame) {
    for (long row = 0; row < s; ++row) {
      for (long col = 0; col < s; ++col) {
        if (row == 0 || col == 0 || row == s - 1 || col == s - 1) {
          img[row * s + col] = g.v / 2.0;
        }
      }
    }
  }
  if (g.haze) {
    for (std::size_t i = 0; i < img.numel(); ++i) img[i] += 0.1;
  }
  if (rng) {
    for (std::size_t i = 0; i < img.numel(); ++i) img[i] += rng->normal(0.0, cfg.noise_sigma);
  }
  for (std::size_t i = 0; i < img.numel(); ++i) img[i] = std::clamp(img[i], 0.0, 1.0);
  return img;
}

Tensor quantize_f32(Tensor t) {
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<double>(static_cast<float>(t[i]));
  return t;
}

MultimodalDataset generate_dataset(std::size_t n, const GlyphConfig& cfg) {
  cfg.validate();
  if (n < 10) throw ValueError("generate_dataset: need at least 10 instances");
  Rng rng(cfg.seed);
  std::size_t m = cfg.side * cfg.side;
  MultimodalDataset d;
  d.X = Tensor({n, m});
  d.Y = Tensor({n, kAttributeCount});
  Tensor y({kAttributeCount});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < kAttributeCount; ++j) {
      y[j] = static_cast<double>(rng.below(2));
    }
    Tensor img = render_glyph(y, cfg, &rng);
    std::memcpy(d.X.data() + i * m, img.data(), m * sizeof(double));
    std::memcpy(d.Y.data() + i * kAttributeCount, y.data(), kAttributeCount * sizeof(double));
  }
  d.X = quantize_f32(std::move(d.X));
  d.Y = quantize_f32(std::move(d.Y));
  std::size_t train_end = n * 8 / 10, val_end = n * 9 / 10;
  for (std::size_t i = 0; i < n; ++i) {
    auto idx = static_cast<std::uint32_t>(i);
    if (i < train_end)
      d.train_idx.push_back(idx);
    else if (i < val_end)
      d.val_idx.push_back(idx);
    else
      d.test_idx.push_back(idx);
  }
  return d;
}

OracleReading attribute_oracle(const Tensor& x, std::size_t side) {
  long s = static_cast<long>(side);
  if (x.numel() != side * side) {
    throw ShapeError("attribute_oracle: expected " + std::to_string(side * side) +
                     " pixels, got " + x.shape_str());
  }
  auto px = [&](long row, long col) { return x[row * s + col]; };
  auto clamp01 = [](double v) { return std::clamp(v, 0.0, 1.0); };

  OracleReading r;

  // Border statistics feed the frame bit; everything else reads the interior.
  std::vector<double> border;
  for (long row = 0; row < s; ++row) {
    for (long col = 0; col < s; ++col) {
      if (row == 0 || col == 0 || row == s - 1 || col == s - 1) border.push_back(px(row, col));
    }
  }
  std::sort(border.begin(), border.end());
  double border_median =
      0.5 * (border[border.size() / 2] + border[(border.size() - 1) / 2]);

  std::vector<double> interior;
  interior.reserve((side - 2) * (side - 2));
  double interior_max = 0.0;
  for (long row = 1; row < s - 1; ++row) {
    for (long col = 1; col < s - 1; ++col) {
      interior.push_back(px(row, col));
      interior_max = std::max(interior_max, px(row, col));
    }
  }
  std::vector<double> sorted_interior = interior;
  std::sort(sorted_interior.begin(), sorted_interior.end());
  // Lower-quartile interior value: a background (haze-level) statistic, since
  // the largest shape lights at most ~51% of the interior.
  double haze_est = sorted_interior[sorted_interior.size() / 4];

  r.bits[6] = haze_est > 0.05 ? 1 : 0;
  r.confidence[6] = clamp01(std::abs(haze_est - 0.05) / 0.05);

  r.bits[5] = border_median > 0.175 ? 1 : 0;
  r.confidence[5] = clamp01(std::abs(border_median - 0.175) / 0.175);

  double v_est = interior_max - haze_est;
  r.bits[4] = v_est >= 0.75 ? 1 : 0;
  r.confidence[4] = clamp01(std::abs(v_est - 0.75) / 0.25);

  // Binary lit mask over the interior.
  double lit_thr = haze_est + 0.25;
  long rmin = s, rmax = -1, cmin = s, cmax = -1;
  std::size_t lit_count = 0;
  std::vector<bool> lit((side - 2) * (side - 2), false);
  for (long row = 1; row < s - 1; ++row) {
    for (long col = 1; col < s - 1; ++col) {
      if (px(row, col) > lit_thr) {
        lit[(row - 1) * (s - 2) + (col - 1)] = true;
        ++lit_count;
        rmin = std::min(rmin, row);
        rmax = std::max(rmax, row);
        cmin = std::min(cmin, col);
        cmax = std::max(cmax, col);
      }
    }
  }

  if (lit_count == 0) {
    // Degenerate input: report the all-defaults reading at zero confidence
    // for every mask-derived bit.
    for (int b : {0, 1, 2, 3, 7}) {
      r.bits[b] = 0;
      r.confidence[b] = 0.0;
    }
    return r;
  }

  auto is_lit = [&](long row, long col) {
    return row >= 1 && row <= s - 2 && col >= 1 && col <= s - 2 &&
           lit[(row - 1) * (s - 2) + (col - 1)];
  };

  double s_real = static_cast<double>(side);
  long r_small = std::lround(0.19 * s_real), r_large = std::lround(0.31 * s_real);
  double extent = static_cast<double>(std::max(rmax - rmin, cmax - cmin) + 1);
  // Small shapes span 2 r_small + 1 pixels; large ones at least 2 r_large
  // even after losing a border row to the interior mask.
  double extent_thr = static_cast<double>(r_small + r_large + 1);
  r.bits[1] = extent >= extent_thr ? 1 : 0;
  r.confidence[1] = clamp01(std::abs(extent - (extent_thr - 0.5)) / 2.0);

  double center_thr = (s_real - 1.0) / 2.0;
  double row_center = 0.5 * static_cast<double>(rmin + rmax);
  double col_center = 0.5 * static_cast<double>(cmin + cmax);
  r.bits[2] = col_center > center_thr ? 1 : 0;
  r.confidence[2] = clamp01(std::abs(col_center - center_thr) / 2.5);
  r.bits[3] = row_center > center_thr ? 1 : 0;
  r.confidence[3] = clamp01(std::abs(row_center - center_thr) / 2.5);

  int corners = static_cast<int>(is_lit(rmin, cmin)) + static_cast<int>(is_lit(rmin, cmax)) +
                static_cast<int>(is_lit(rmax, cmin)) + static_cast<int>(is_lit(rmax, cmax));
  r.bits[0] = corners >= 2 ? 0 : 1;  // squares fill their bounding-box corners
  r.confidence[0] = clamp01(std::abs(static_cast<double>(corners) - 1.5) / 2.5);

  double bbox_area = static_cast<double>((rmax - rmin + 1) * (cmax - cmin + 1));
  double fill_ratio = static_cast<double>(lit_count) / bbox_area;
  r.bits[7] = fill_ratio < 0.55 ? 1 : 0;
  r.confidence[7] = clamp01(std::abs(fill_ratio - 0.55) / 0.3);

  return r;
}

namespace {

void write_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::ifstream& in, const char* what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw FormatError(std::string("dataset file truncated while reading ") + what);
  }
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32_block(std::ofstream& out, const Tensor& t) {
  std::vector<float> buf(t.numel());
  for (std::size_t i = 0; i < t.numel(); ++i) buf[i] = static_cast<float>(t[i]);
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

Tensor read_f32_block(std::ifstream& in, std::size_t rows, std::size_t cols, const char* what) {
  std::vector<float> buf(rows * cols);
  if (!in.read(reinterpret_cast<char*>(buf.data()),
               static_cast<std::streamsize>(buf.size() * sizeof(float)))) {
    throw FormatError(std::string("dataset file truncated while reading ") + what);
  }
  Tensor t({rows, cols});
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<double>(buf[i]);
  return t;
}

void write_index_block(std::ofstream& out, const std::vector<std::uint32_t>& idx) {
  write_u32(out, static_cast<std::uint32_t>(idx.size()));
  for (std::uint32_t v : idx) write_u32(out, v);
}

std::vector<std::uint32_t> read_index_block(std::ifstream& in, std::size_t n, const char* what) {
  std::uint32_t count = read_u32(in, what);
  if (count > n) {
    throw ValueError(std::string("dataset split ") + what + " claims " + std::to_string(count) +
                     " entries for " + std::to_string(n) + " instances");
  }
  std::vector<std::uint32_t> idx(count);
  for (std::uint32_t& v : idx) {
    v = read_u32(in, what);
    if (v >= n) {
      throw ValueError(std::string("dataset split ") + what + " index " + std::to_string(v) +
                       " out of range for " + std::to_string(n) + " instances");
    }
  }
  return idx;
}

constexpr char kMagic[8] = {'C', 'M', 'M', 'A', 'D', 'S', '1', '\n'};

}  // namespace

void save_dataset(const MultimodalDataset& d, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, static_cast<std::uint32_t>(d.n()));
  write_u32(out, static_cast<std::uint32_t>(d.m()));
  write_u32(out, static_cast<std::uint32_t>(d.a()));
  write_f32_block(out, d.X);
  write_f32_block(out, d.Y);
  write_index_block(out, d.train_idx);
  write_index_block(out, d.val_idx);
  write_index_block(out, d.test_idx);
  if (!out) throw FormatError("write failed for " + path);
}

MultimodalDataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("bad dataset magic in " + path);
  }
  std::size_t n = read_u32(in, "instance count");
  std::size_t m = read_u32(in, "pixel count");
  std::size_t a = read_u32(in, "attribute count");
  if (n == 0 || m == 0 || a == 0) throw ValueError("dataset with zero dimension in " + path);
  MultimodalDataset d;
  d.X = read_f32_block(in, n, m, "images");
  d.Y = read_f32_block(in, n, a, "attributes");
  for (std::size_t i = 0; i < d.X.numel(); ++i) {
    if (!(d.X[i] >= 0.0 && d.X[i] <= 1.0)) {
      throw ValueError("dataset pixel " + std::to_string(d.X[i]) + " outside [0, 1]");
    }
  }
  for (std::size_t i = 0; i < d.Y.numel(); ++i) {
    if (d.Y[i] != 0.0 && d.Y[i] != 1.0) {
      throw ValueError("dataset attribute " + std::to_string(d.Y[i]) + " is not a bit");
    }
  }
  d.train_idx = read_index_block(in, n, "train");
  d.val_idx = read_index_block(in, n, "validation");
  d.test_idx = read_index_block(in, n, "test");
  return d;
}

void save_pgm(const Tensor& image, std::size_t side, const std::string& path) {
  if (image.numel() != side * side) {
    throw ShapeError("save_pgm: expected " + std::to_string(side * side) + " pixels, got " +
                     image.shape_str());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out << "P5\n" << side << " " << side << "\n255\n";
  std::vector<unsigned char> bytes(image.numel());
  for (std::size_t i = 0; i < image.numel(); ++i) {
    double v = std::clamp(image[i], 0.0, 1.0);
    bytes[i] = static_cast<unsigned char>(std::lround(255.0 * v));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path);
}

Tensor load_pgm(const std::string& path, std::size_t& side_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5") throw FormatError("not a binary PGM: " + path);
  auto next_token = [&]() {
    // Skips whitespace and # comment lines between header fields.
    for (;;) {
      int c = in.peek();
      if (c == '#') {
        std::string line;
        std::getline(in, line);
      } else if (std::isspace(c)) {
        in.get();
      } else {
        break;
      }
    }
    long v;
    if (!(in >> v) || v <= 0) throw FormatError("bad PGM header in " + path);
    return v;
  };
  long w = next_token();
  long h = next_token();
  long maxval = next_token();
  if (w != h) throw FormatError("PGM is not square: " + path);
  if (maxval != 255) throw FormatError("PGM maxval must be 255 in " + path);
  in.get();  // single whitespace byte after the header
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  if (!in.read(reinterpret_cast<char*>(bytes.data()),
               static_cast<std::streamsize>(bytes.size()))) {
    throw FormatError("PGM truncated: " + path);
  }
  side_out = static_cast<std::size_t>(w);
  Tensor img({bytes.size()});
  for (std::size_t i = 0; i < bytes.size(); ++i) img[i] = bytes[i] / 255.0;
  return img;
}

}  // namespace cmma
