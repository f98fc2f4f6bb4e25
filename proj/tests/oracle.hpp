#pragma once

// Test-side reference implementations, written independently of the library
// kernels: scatter-style traversals, all-double arithmetic, no blocking or
// lane tricks.  Used to cross-check both the fast and the naive module paths.

#include <blockcs/kernels.hpp>
#include <blockcs/tensor.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace oracle {

using blockcs::ConvSpec;
using blockcs::Tensor;

inline Tensor<double> conv2d(const Tensor<double>& x, const Tensor<double>& w,
                             const Tensor<double>* bias, const ConvSpec& sp) {
  const int64_t n_items = x.shape[0];
  const int64_t oh = sp.conv_out_h(x.shape[2]);
  const int64_t ow = sp.conv_out_w(x.shape[3]);
  Tensor<double> out(n_items, sp.out_channels, oh, ow);
  for (int64_t n = 0; n < n_items; ++n)
    for (int64_t ic = 0; ic < sp.in_channels; ++ic)
      for (int64_t iy = 0; iy < x.shape[2]; ++iy)
        for (int64_t ix = 0; ix < x.shape[3]; ++ix) {
          const double v = x(n, ic, iy, ix);
          for (int64_t oc = 0; oc < sp.out_channels; ++oc)
            for (int64_t ky = 0; ky < sp.kernel_h; ++ky)
              for (int64_t kx = 0; kx < sp.kernel_w; ++kx) {
                const int64_t ny = iy + sp.pad_h - ky;
                const int64_t nx = ix + sp.pad_w - kx;
                if (ny < 0 || nx < 0) continue;
                if (ny % sp.stride_h != 0 || nx % sp.stride_w != 0) continue;
                const int64_t oy = ny / sp.stride_h;
                const int64_t ox = nx / sp.stride_w;
                if (oy >= oh || ox >= ow) continue;
                out(n, oc, oy, ox) += v * w(oc, ic, ky, kx);
              }
        }
  if (bias != nullptr)
    for (int64_t n = 0; n < n_items; ++n)
      for (int64_t oc = 0; oc < sp.out_channels; ++oc)
        for (int64_t oy = 0; oy < oh; ++oy)
          for (int64_t ox = 0; ox < ow; ++ox) out(n, oc, oy, ox) += (*bias)(0, oc, 0, 0);
  return out;
}

inline Tensor<double> convtranspose2d(const Tensor<double>& x, const Tensor<double>& w,
                                      const Tensor<double>* bias, const ConvSpec& sp) {
  const int64_t n_items = x.shape[0];
  const int64_t oh = sp.tconv_out_h(x.shape[2]);
  const int64_t ow = sp.tconv_out_w(x.shape[3]);
  Tensor<double> out(n_items, sp.out_channels, oh, ow);
  for (int64_t n = 0; n < n_items; ++n)
    for (int64_t ci = 0; ci < sp.in_channels; ++ci)
      for (int64_t iy = 0; iy < x.shape[2]; ++iy)
        for (int64_t ix = 0; ix < x.shape[3]; ++ix) {
          const double v = x(n, ci, iy, ix);
          for (int64_t co = 0; co < sp.out_channels; ++co)
            for (int64_t ky = 0; ky < sp.kernel_h; ++ky)
              for (int64_t kx = 0; kx < sp.kernel_w; ++kx)
                out(n, co, iy * sp.stride_h + ky, ix * sp.stride_w + kx) += v * w(ci, co, ky, kx);
        }
  if (bias != nullptr)
    for (int64_t n = 0; n < n_items; ++n)
      for (int64_t co = 0; co < sp.out_channels; ++co)
        for (int64_t oy = 0; oy < oh; ++oy)
          for (int64_t ox = 0; ox < ow; ++ox) out(n, co, oy, ox) += (*bias)(0, co, 0, 0);
  return out;
}

inline Tensor<double> prelu(const Tensor<double>& x, const Tensor<double>& slope) {
  Tensor<double> out = Tensor<double>::zeros_like(x);
  for (int64_t n = 0; n < x.shape[0]; ++n)
    for (int64_t c = 0; c < x.shape[1]; ++c) {
      const double a = slope(0, c, 0, 0);
      for (int64_t y = 0; y < x.shape[2]; ++y)
        for (int64_t xx = 0; xx < x.shape[3]; ++xx) {
          const double v = x(n, c, y, xx);
          out(n, c, y, xx) = v >= 0.0 ? v : a * v;
        }
    }
  return out;
}

inline double mse(const Tensor<double>& pred, const Tensor<double>& target) {
  double total = 0.0;
  for (size_t i = 0; i < pred.data.size(); ++i) {
    const double d = pred.data[i] - target.data[i];
    total += d * d;
  }
  return total / static_cast<double>(pred.shape[0]);
}

// one scalar parameter worth of Adam, spelled out step by step
struct AdamScalar {
  double m = 0.0;
  double v = 0.0;
  int64_t t = 0;

  double step(double param, double grad, double lr, double beta1 = 0.9, double beta2 = 0.999,
              double eps = 1e-8) {
    t += 1;
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad * grad;
    const double mhat = m / (1.0 - std::pow(beta1, static_cast<double>(t)));
    const double vhat = v / (1.0 - std::pow(beta2, static_cast<double>(t)));
    return param - lr * mhat / (std::sqrt(vhat) + eps);
  }
};

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

template <typename T, typename U>
double max_rel_err(const Tensor<T>& a, const Tensor<U>& b) {
  double worst = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i)
    worst = std::max(worst, rel_err(static_cast<double>(a.data[i]), static_cast<double>(b.data[i])));
  return worst;
}

template <typename T>
double dot(const Tensor<T>& a, const Tensor<T>& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i)
    acc += static_cast<double>(a.data[i]) * static_cast<double>(b.data[i]);
  return acc;
}

}  // namespace oracle
