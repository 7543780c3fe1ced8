#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace cmma {

/// Dense row-major array of 64-bit reals. Rank 1 (vectors) and rank 2
/// (batch-by-feature matrices) cover everything in this project; scalars are
/// shape {1}.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
  static Tensor ones(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double v);
  static Tensor row(std::vector<double> v);  // shape {n}

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }
  std::size_t rows() const;  // rank-2 only
  std::size_t cols() const;  // rank-2 only
  bool is_scalar() const { return numel() == 1; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  /// Same data viewed under a new shape; element count must match.
  Tensor reshaped(std::vector<std::size_t> shape) const;
  /// Row r of a rank-2 tensor as a rank-1 tensor (copy).
  Tensor row_at(std::size_t r) const;

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;

  std::string shape_str() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

/// "2x3" style rendering used in error messages.
std::string shape_str(const std::vector<std::size_t>& shape);

}  // namespace cmma
