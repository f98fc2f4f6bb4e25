#include "blockcs/tensor.hpp"

#include <sstream>
#include <stdexcept>

namespace blockcs {

std::string shape_string(const std::array<int64_t, 4>& shape) {
  std::ostringstream os;
  os << shape[0] << "x" << shape[1] << "x" << shape[2] << "x" << shape[3];
  return os.str();
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.shape == b.shape) return;
  for (int d = 0; d < 4; ++d) {
    if (a.shape[d] != b.shape[d]) {
      static const char* axis[4] = {"batch", "channel", "height", "width"};
      std::ostringstream os;
      os << what << ": " << axis[d] << " mismatch, " << shape_string(a.shape) << " vs "
         << shape_string(b.shape);
      throw std::invalid_argument(os.str());
    }
  }
}

void ConvSpec::validate() const {
  auto positive = [](int64_t v, const char* name) {
    if (v <= 0) {
      std::ostringstream os;
      os << "conv spec: " << name << " must be positive, got " << v;
      throw std::invalid_argument(os.str());
    }
  };
  positive(in_channels, "in_channels");
  positive(out_channels, "out_channels");
  positive(kernel_h, "kernel_h");
  positive(kernel_w, "kernel_w");
  positive(stride_h, "stride_h");
  positive(stride_w, "stride_w");
  if (pad_h < 0 || pad_w < 0) throw std::invalid_argument("conv spec: padding must be non-negative");
}

static int64_t conv_extent(int64_t in, int64_t pad, int64_t kernel, int64_t stride,
                           const char* axis) {
  int64_t out = (in + 2 * pad - kernel) / stride + 1;
  if (in + 2 * pad < kernel || out <= 0) {
    std::ostringstream os;
    os << "conv spec: output " << axis << " is non-positive for input " << axis << " " << in
       << ", kernel " << kernel << ", stride " << stride << ", pad " << pad;
    throw std::invalid_argument(os.str());
  }
  return out;
}

int64_t ConvSpec::conv_out_h(int64_t in_h) const {
  return conv_extent(in_h, pad_h, kernel_h, stride_h, "height");
}

int64_t ConvSpec::conv_out_w(int64_t in_w) const {
  return conv_extent(in_w, pad_w, kernel_w, stride_w, "width");
}

template struct Tensor<float>;
template struct Tensor<double>;
template void require_same_shape<float>(const Tensor<float>&, const Tensor<float>&, const char*);
template void require_same_shape<double>(const Tensor<double>&, const Tensor<double>&, const char*);

}  // namespace blockcs
