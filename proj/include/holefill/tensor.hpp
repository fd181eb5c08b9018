#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace holefill {

using Shape = std::vector<int>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major array of doubles. Images and feature maps use CHW layout.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value) { return Tensor({1}, value); }
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_, 0.0); }
  static Tensor ones_like(const Tensor& other) { return Tensor(other.shape_, 1.0); }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // CHW accessors; valid for rank-3 tensors only.
  int channels() const { return shape_[0]; }
  int height() const { return shape_[1]; }
  int width() const { return shape_[2]; }
  double& at(int c, int y, int x) {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }
  double at(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }

  double item() const;
  Tensor reshaped(Shape shape) const;
  void fill(double value);

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

// Raw kernels used by the autograd ops. None of these record gradients.
namespace kernels {

// 2-D convolution with odd square kernel, stride 1, zero padding k/2.
// x: (Cin,H,W), w: (Cout,Cin,k,k) -> (Cout,H,W).
Tensor conv2d(const Tensor& x, const Tensor& w);
// Adjoint of conv2d with respect to its input: g (Cout,H,W), w -> (Cin,H,W).
Tensor conv2d_input_adjoint(const Tensor& g, const Tensor& w);
// Adjoint with respect to the weights: x (Cin,H,W), g (Cout,H,W) -> (Cout,Cin,k,k).
Tensor conv2d_weight_adjoint(const Tensor& x, const Tensor& g, int kernel_size);

// (C,H,W) -> (C): sum over spatial positions.
Tensor channel_sum(const Tensor& x);
// (C) -> (C,H,W)
Tensor channel_broadcast(const Tensor& v, int height, int width);

// 2x2 average pooling with floor semantics on odd sizes.
Tensor avg_pool2(const Tensor& x);
Tensor avg_pool2_adjoint(const Tensor& g, int height, int width);

// Nearest-neighbour resize to an explicit size, and its adjoint (scatter-add).
Tensor upsample_nearest(const Tensor& x, int height, int width);
Tensor upsample_nearest_adjoint(const Tensor& g, int height, int width);

}  // namespace kernels

}  // namespace holefill
