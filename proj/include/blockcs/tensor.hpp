#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace blockcs {

// Dense rank-4 tensor in N,C,H,W order, row-major contiguous.
// The one value type shared by images, measurements, weights and gradients.
template <typename T>
struct Tensor {
  std::array<int64_t, 4> shape{0, 0, 0, 0};
  std::vector<T> data;

  Tensor() = default;
  Tensor(int64_t n, int64_t c, int64_t h, int64_t w, T fill = T(0))
      : shape{n, c, h, w}, data(static_cast<size_t>(n * c * h * w), fill) {}

  int64_t batch() const { return shape[0]; }
  int64_t channels() const { return shape[1]; }
  int64_t height() const { return shape[2]; }
  int64_t width() const { return shape[3]; }
  int64_t size() const { return shape[0] * shape[1] * shape[2] * shape[3]; }

  T& operator()(int64_t n, int64_t c, int64_t y, int64_t x) {
    return data[static_cast<size_t>(((n * shape[1] + c) * shape[2] + y) * shape[3] + x)];
  }
  T operator()(int64_t n, int64_t c, int64_t y, int64_t x) const {
    return data[static_cast<size_t>(((n * shape[1] + c) * shape[2] + y) * shape[3] + x)];
  }

  T* plane(int64_t n, int64_t c) {
    return data.data() + static_cast<size_t>((n * shape[1] + c) * shape[2] * shape[3]);
  }
  const T* plane(int64_t n, int64_t c) const {
    return data.data() + static_cast<size_t>((n * shape[1] + c) * shape[2] * shape[3]);
  }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  static Tensor zeros_like(const Tensor& other) {
    return Tensor(other.shape[0], other.shape[1], other.shape[2], other.shape[3]);
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape[0], shape[1], shape[2], shape[3]);
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

std::string shape_string(const std::array<int64_t, 4>& shape);

// Throws std::invalid_argument naming `what` when the two shapes differ.
template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what);

// Geometry of a (transposed) convolution. For a plain convolution the output
// extents follow floor((in + 2*pad - kernel) / stride) + 1; specs producing a
// non-positive extent are rejected.
struct ConvSpec {
  int64_t in_channels = 0;
  int64_t out_channels = 0;
  int64_t kernel_h = 0;
  int64_t kernel_w = 0;
  int64_t stride_h = 1;
  int64_t stride_w = 1;
  int64_t pad_h = 0;
  int64_t pad_w = 0;
  bool has_bias = false;

  void validate() const;
  int64_t conv_out_h(int64_t in_h) const;
  int64_t conv_out_w(int64_t in_w) const;
  // Transposed convolution output extents: (in - 1) * stride + kernel.
  int64_t tconv_out_h(int64_t in_h) const { return (in_h - 1) * stride_h + kernel_h; }
  int64_t tconv_out_w(int64_t in_w) const { return (in_w - 1) * stride_w + kernel_w; }
};

extern template struct Tensor<float>;
extern template struct Tensor<double>;

}  // namespace blockcs
