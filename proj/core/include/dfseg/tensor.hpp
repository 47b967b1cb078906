// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cassert>
#include <cstdint>
#include <initializer_list>
#include <vector>

namespace dfseg {

/// Dense row-major tensor of doubles, up to 4 dimensions in practice
/// (N x C x H x W activations, 2-d matrices, 1-d vectors).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::initializer_list<int> shape)
      : Tensor(std::vector<int>(shape)) {}

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor filled(std::vector<int> shape, double value);
  /// 1-d tensor from explicit values.
  static Tensor vector(std::vector<double> values);

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  double& at(int i) { return data_[static_cast<std::size_t>(i)]; }
  double at(int i) const { return data_[static_cast<std::size_t>(i)]; }

  double& at(int i, int j) {
    assert(ndim() == 2);
    return data_[static_cast<std::size_t>(i) * shape_[1] + j];
  }
  double at(int i, int j) const {
    assert(ndim() == 2);
    return data_[static_cast<std::size_t>(i) * shape_[1] + j];
  }

  double& at(int n, int c, int h, int w) {
    assert(ndim() == 4);
    return data_[index4(n, c, h, w)];
  }
  double at(int n, int c, int h, int w) const {
    assert(ndim() == 4);
    return data_[index4(n, c, h, w)];
  }

  void fill(double value);
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  /// this += scale * other (elementwise; shapes must match).
  void add_scaled(const Tensor& other, double scale = 1.0);
  void scale(double factor);

  double sum() const;
  double min_value() const;
  double max_value() const;
  double max_abs_diff(const Tensor& other) const;

 private:
  std::size_t index4(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) *
               shape_[3] +
           w;
  }

  std::vector<int> shape_;
  std::vector<double> data_;
};

}  // namespace dfseg
