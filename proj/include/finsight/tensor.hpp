// Copyright 2026 The FinSight Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FINSIGHT_TENSOR_HPP_
#define FINSIGHT_TENSOR_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace finsight {

/// Extents of a rank-4 tensor in batch, channel, height, width order.
struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t numel() const { return n * c * h * w; }
  std::size_t plane() const { return h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

/// Dense rank-4 tensor of doubles stored row-major as N -> C -> H -> W.
///
/// The tensor owns its storage and has value semantics. Every public
/// operation in the library validates that its result is finite; a
/// non-finite value is reported as a ValueError instead of propagating.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(shape, 0.0); }
  static Tensor scalar(double v) { return Tensor(Shape{1, 1, 1, 1}, v); }

  const Shape& shape() const { return shape_; }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t index(std::size_t n, std::size_t c, std::size_t y,
                    std::size_t x) const {
    return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  double& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
    return data_[index(n, c, y, x)];
  }
  double at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return data_[index(n, c, y, x)];
  }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  // Contiguous H*W plane for one (batch, channel) pair.
  double* plane(std::size_t n, std::size_t c) {
    return data_.data() + (n * shape_.c + c) * shape_.plane();
  }
  const double* plane(std::size_t n, std::size_t c) const {
    return data_.data() + (n * shape_.c + c) * shape_.plane();
  }

  // Throws ValueError naming `op` if any element is NaN or infinite.
  void require_finite(std::string_view op) const;
  bool all_finite() const;

  void fill(double v);
  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(double s);

  double sum() const;
  double max_abs() const;

 private:
  Shape shape_{};
  std::vector<double> data_;
};

// Exact bit-pattern equality of shape and contents.
bool bitwise_equal(const Tensor& a, const Tensor& b);

}  // namespace finsight

#endif  // FINSIGHT_TENSOR_HPP_
