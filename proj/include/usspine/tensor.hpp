#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace usspine {

using Real = double;

/// Extents of a tensor, at most four (batch, channel, height, width).
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<int> dims);
  explicit Shape(std::vector<int> dims);

  int rank() const { return static_cast<int>(dims_.size()); }
  int operator[](int axis) const { return dims_[static_cast<std::size_t>(axis)]; }
  std::size_t numel() const;
  const std::vector<int>& dims() const { return dims_; }

  bool operator==(const Shape& other) const = default;
  std::string str() const;

 private:
  std::vector<int> dims_;
};

/// Dense row-major array of reals.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = 0.0);
  Tensor(Shape shape, std::vector<Real> data);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<Real> data() { return data_; }
  std::span<const Real> data() const { return data_; }
  Real* raw() { return data_.data(); }
  const Real* raw() const { return data_.data(); }

  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }

  // NCHW element access; only valid for rank-4 tensors.
  Real& at(int n, int c, int h, int w);
  Real at(int n, int c, int h, int w) const;

  void fill(Real value);
  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<Real> data_;
};

/// A trainable tensor with its gradient accumulator.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad();
};

}  // namespace usspine
