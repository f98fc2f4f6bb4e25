#include "blockcs/kernels.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "blockcs/parallel.hpp"

namespace blockcs {

namespace {

// Upper bound on the per-worker im2col scratch, in elements.
constexpr int64_t kColScratchElems = 1 << 20;

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

template <typename T>
void check_conv_args(const char* op, const Tensor<T>& input, const Tensor<T>& weights,
                     const Tensor<T>* bias, const ConvSpec& spec, bool transposed) {
  spec.validate();
  if (input.channels() != spec.in_channels) {
    std::ostringstream os;
    os << op << ": input channels " << input.channels() << " do not match spec in_channels "
       << spec.in_channels;
    fail(os.str());
  }
  const std::array<int64_t, 4> want =
      transposed ? std::array<int64_t, 4>{spec.in_channels, spec.out_channels, spec.kernel_h,
                                          spec.kernel_w}
                 : std::array<int64_t, 4>{spec.out_channels, spec.in_channels, spec.kernel_h,
                                          spec.kernel_w};
  if (weights.shape != want) {
    std::ostringstream os;
    os << op << ": weights shaped " << shape_string(weights.shape) << ", spec requires "
       << shape_string(want);
    fail(os.str());
  }
  if (transposed && (spec.pad_h != 0 || spec.pad_w != 0)) {
    std::ostringstream os;
    os << op << ": only zero padding is supported, got pad " << spec.pad_h << "," << spec.pad_w;
    fail(os.str());
  }
  if (spec.has_bias) {
    if (bias == nullptr) fail(std::string(op) + ": spec has_bias but no bias tensor given");
    const std::array<int64_t, 4> bwant{1, spec.out_channels, 1, 1};
    if (bias->shape != bwant) {
      std::ostringstream os;
      os << op << ": bias shaped " << shape_string(bias->shape) << ", expected "
         << shape_string(bwant);
      fail(os.str());
    }
  } else if (bias != nullptr) {
    fail(std::string(op) + ": bias tensor given but spec has_bias is false");
  }
}

// Dot product over a fixed 16-lane partial-sum layout with a fixed combining
// tree, so the result is reproducible while the lane loop still vectorizes.
template <typename T>
T dot_lanes(const T* a, const T* b, int64_t n) {
  constexpr int kLanes = 16;
  T acc[kLanes] = {};
  int64_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (int l = 0; l < kLanes; ++l) acc[l] += a[i + l] * b[i + l];
  }
  for (; i < n; ++i) acc[i & (kLanes - 1)] += a[i] * b[i];
  for (int stride = kLanes / 2; stride > 0; stride /= 2) {
    for (int l = 0; l < stride; ++l) acc[l] += acc[l + stride];
  }
  return acc[0];
}

// Writes the receptive-field rows for output positions [p0, p1), one row of
// K = C_in*kH*kW values per position, zero-filled where the window leaves the
// (padded) input.
template <typename T>
void im2col_rows(const Tensor<T>& input, int64_t n, const ConvSpec& s, int64_t out_w, int64_t p0,
                 int64_t p1, T* col) {
  const int64_t in_h = input.height();
  const int64_t in_w = input.width();
  const int64_t K = s.in_channels * s.kernel_h * s.kernel_w;
  for (int64_t p = p0; p < p1; ++p) {
    const int64_t oh = p / out_w;
    const int64_t ow = p % out_w;
    const int64_t ih0 = oh * s.stride_h - s.pad_h;
    const int64_t iw0 = ow * s.stride_w - s.pad_w;
    T* row = col + (p - p0) * K;
    int64_t k = 0;
    for (int64_t c = 0; c < s.in_channels; ++c) {
      const T* plane = input.plane(n, c);
      for (int64_t kh = 0; kh < s.kernel_h; ++kh) {
        const int64_t ih = ih0 + kh;
        if (ih < 0 || ih >= in_h) {
          for (int64_t kw = 0; kw < s.kernel_w; ++kw) row[k++] = T(0);
          continue;
        }
        const T* line = plane + ih * in_w;
        for (int64_t kw = 0; kw < s.kernel_w; ++kw) {
          const int64_t iw = iw0 + kw;
          row[k++] = (iw >= 0 && iw < in_w) ? line[iw] : T(0);
        }
      }
    }
  }
}

int64_t rows_per_chunk(int64_t out_w, int64_t K) {
  int64_t rows = kColScratchElems / (out_w * K);
  if (rows < 1) rows = 1;
  return rows;
}

std::atomic<BackwardFault> g_backward_fault{BackwardFault::none};

template <typename T>
void apply_fault(BackwardFault which, Tensor<T>& grad) {
  if (g_backward_fault.load(std::memory_order_relaxed) == which && !grad.data.empty()) {
    grad.data[0] = -grad.data[0];
  }
}

}  // namespace

void set_backward_fault(BackwardFault fault) {
  g_backward_fault.store(fault, std::memory_order_relaxed);
}

BackwardFault backward_fault() { return g_backward_fault.load(std::memory_order_relaxed); }

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>* bias,
                         const ConvSpec& spec) {
  check_conv_args("conv2d", input, weights, bias, spec, false);
  const int64_t N = input.batch();
  const int64_t out_h = spec.conv_out_h(input.height());
  const int64_t out_w = spec.conv_out_w(input.width());
  const int64_t K = spec.in_channels * spec.kernel_h * spec.kernel_w;
  Tensor<T> out(N, spec.out_channels, out_h, out_w);

  const int64_t chunk_rows = rows_per_chunk(out_w, K);
  const int64_t chunks = (out_h + chunk_rows - 1) / chunk_rows;
  parallel_for(N * chunks, [&](int64_t task0, int64_t task1) {
    std::vector<T> col(static_cast<size_t>(chunk_rows * out_w * K));
    for (int64_t task = task0; task < task1; ++task) {
      const int64_t n = task / chunks;
      const int64_t oh0 = (task % chunks) * chunk_rows;
      const int64_t oh1 = std::min(out_h, oh0 + chunk_rows);
      const int64_t p0 = oh0 * out_w;
      const int64_t p1 = oh1 * out_w;
      im2col_rows(input, n, spec, out_w, p0, p1, col.data());
      for (int64_t oc = 0; oc < spec.out_channels; ++oc) {
        const T* wrow = weights.data.data() + oc * K;
        const T b = bias ? bias->data[static_cast<size_t>(oc)] : T(0);
        T* orow = out.plane(n, oc) + p0;
        for (int64_t p = 0; p < p1 - p0; ++p) orow[p] = dot_lanes(wrow, col.data() + p * K, K) + b;
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> conv2d_forward_naive(const Tensor<T>& input, const Tensor<T>& weights,
                               const Tensor<T>* bias, const ConvSpec& spec) {
  check_conv_args("conv2d", input, weights, bias, spec, false);
  const int64_t N = input.batch();
  const int64_t in_h = input.height();
  const int64_t in_w = input.width();
  const int64_t out_h = spec.conv_out_h(in_h);
  const int64_t out_w = spec.conv_out_w(in_w);
  Tensor<T> out(N, spec.out_channels, out_h, out_w);
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t oc = 0; oc < spec.out_channels; ++oc) {
      for (int64_t oh = 0; oh < out_h; ++oh) {
        for (int64_t ow = 0; ow < out_w; ++ow) {
          T acc = T(0);
          for (int64_t c = 0; c < spec.in_channels; ++c) {
            for (int64_t kh = 0; kh < spec.kernel_h; ++kh) {
              const int64_t ih = oh * spec.stride_h - spec.pad_h + kh;
              if (ih < 0 || ih >= in_h) continue;
              for (int64_t kw = 0; kw < spec.kernel_w; ++kw) {
                const int64_t iw = ow * spec.stride_w - spec.pad_w + kw;
                if (iw < 0 || iw >= in_w) continue;
                acc += input(n, c, ih, iw) * weights(oc, c, kh, kw);
              }
            }
          }
          out(n, oc, oh, ow) = acc + (bias ? bias->data[static_cast<size_t>(oc)] : T(0));
        }
      }
    }
  }
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weights,
                             const ConvSpec& spec, const Tensor<T>& grad_output) {
  {
    ConvSpec nobias = spec;
    nobias.has_bias = false;
    check_conv_args("conv2d_backward", input, weights, static_cast<const Tensor<T>*>(nullptr),
                    nobias, false);
  }
  const int64_t N = input.batch();
  const int64_t in_h = input.height();
  const int64_t in_w = input.width();
  const int64_t out_h = spec.conv_out_h(in_h);
  const int64_t out_w = spec.conv_out_w(in_w);
  const std::array<int64_t, 4> go_want{N, spec.out_channels, out_h, out_w};
  if (grad_output.shape != go_want) {
    std::ostringstream os;
    os << "conv2d_backward: grad_output shaped " << shape_string(grad_output.shape)
       << ", forward output is " << shape_string(go_want);
    fail(os.str());
  }

  const int64_t K = spec.in_channels * spec.kernel_h * spec.kernel_w;
  ConvGrads<T> g;
  g.input = Tensor<T>(N, spec.in_channels, in_h, in_w);
  g.weights = Tensor<T>(spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w);
  if (spec.has_bias) g.bias = Tensor<T>(1, spec.out_channels, 1, 1);

  const int64_t chunk_rows = rows_per_chunk(out_w, K);
  const int64_t chunks = (out_h + chunk_rows - 1) / chunk_rows;

  // d/dweights and d/dbias: chunks advance in (n, p) order so each gradient
  // element accumulates in a fixed sequence; workers split output channels.
  {
    std::vector<T> col(static_cast<size_t>(chunk_rows * out_w * K));
    for (int64_t n = 0; n < N; ++n) {
      for (int64_t ch = 0; ch < chunks; ++ch) {
        const int64_t oh0 = ch * chunk_rows;
        const int64_t oh1 = std::min(out_h, oh0 + chunk_rows);
        const int64_t p0 = oh0 * out_w;
        const int64_t p1 = oh1 * out_w;
        im2col_rows(input, n, spec, out_w, p0, p1, col.data());
        parallel_for(spec.out_channels, [&](int64_t oc0, int64_t oc1) {
          for (int64_t oc = oc0; oc < oc1; ++oc) {
            const T* gorow = grad_output.plane(n, oc) + p0;
            T* gwrow = g.weights.data.data() + oc * K;
            T bsum = T(0);
            for (int64_t p = 0; p < p1 - p0; ++p) {
              const T go = gorow[p];
              const T* crow = col.data() + p * K;
              for (int64_t k = 0; k < K; ++k) gwrow[k] += go * crow[k];
              bsum += go;
            }
            if (spec.has_bias) g.bias.data[static_cast<size_t>(oc)] += bsum;
          }
        });
      }
    }
  }

  // d/dinput: independent per batch item; the scatter back into the input
  // runs in (p, k) order within each item.
  parallel_for(N, [&](int64_t n0, int64_t n1) {
    std::vector<T> gcol(static_cast<size_t>(chunk_rows * out_w * K));
    for (int64_t n = n0; n < n1; ++n) {
      for (int64_t ch = 0; ch < chunks; ++ch) {
        const int64_t oh0 = ch * chunk_rows;
        const int64_t oh1 = std::min(out_h, oh0 + chunk_rows);
        const int64_t p0 = oh0 * out_w;
        const int64_t p1 = oh1 * out_w;
        for (int64_t p = p0; p < p1; ++p) {
          T* row = gcol.data() + (p - p0) * K;
          for (int64_t k = 0; k < K; ++k) row[k] = T(0);
          for (int64_t oc = 0; oc < spec.out_channels; ++oc) {
            const T go = grad_output.plane(n, oc)[p];
            const T* wrow = weights.data.data() + oc * K;
            for (int64_t k = 0; k < K; ++k) row[k] += go * wrow[k];
          }
        }
        for (int64_t p = p0; p < p1; ++p) {
          const int64_t oh = p / out_w;
          const int64_t ow = p % out_w;
          const int64_t ih0 = oh * spec.stride_h - spec.pad_h;
          const int64_t iw0 = ow * spec.stride_w - spec.pad_w;
          const T* row = gcol.data() + (p - p0) * K;
          int64_t k = 0;
          for (int64_t c = 0; c < spec.in_channels; ++c) {
            T* plane = g.input.plane(n, c);
            for (int64_t kh = 0; kh < spec.kernel_h; ++kh) {
              const int64_t ih = ih0 + kh;
              if (ih < 0 || ih >= in_h) {
                k += spec.kernel_w;
                continue;
              }
              T* line = plane + ih * in_w;
              for (int64_t kw = 0; kw < spec.kernel_w; ++kw, ++k) {
                const int64_t iw = iw0 + kw;
                if (iw >= 0 && iw < in_w) line[iw] += row[k];
              }
            }
          }
        }
      }
    }
  });

  apply_fault(BackwardFault::conv2d, g.weights);
  return g;
}

template <typename T>
Tensor<T> convtranspose2d_forward(const Tensor<T>& input, const Tensor<T>& weights,
                                  const Tensor<T>* bias, const ConvSpec& spec) {
  check_conv_args("convtranspose2d", input, weights, bias, spec, true);
  const int64_t N = input.batch();
  const int64_t in_h = input.height();
  const int64_t in_w = input.width();
  const int64_t out_h = spec.tconv_out_h(in_h);
  const int64_t out_w = spec.tconv_out_w(in_w);
  Tensor<T> out(N, spec.out_channels, out_h, out_w);

  parallel_for(N * spec.out_channels, [&](int64_t t0, int64_t t1) {
    for (int64_t task = t0; task < t1; ++task) {
      const int64_t n = task / spec.out_channels;
      const int64_t co = task % spec.out_channels;
      T* oplane = out.plane(n, co);
      if (bias) {
        const T b = bias->data[static_cast<size_t>(co)];
        for (int64_t i = 0; i < out_h * out_w; ++i) oplane[i] = b;
      }
      for (int64_t ci = 0; ci < spec.in_channels; ++ci) {
        const T* wtile =
            weights.data.data() + (ci * spec.out_channels + co) * spec.kernel_h * spec.kernel_w;
        const T* iplane = input.plane(n, ci);
        for (int64_t ih = 0; ih < in_h; ++ih) {
          for (int64_t iw = 0; iw < in_w; ++iw) {
            const T v = iplane[ih * in_w + iw];
            T* base = oplane + (ih * spec.stride_h) * out_w + iw * spec.stride_w;
            for (int64_t kh = 0; kh < spec.kernel_h; ++kh) {
              T* line = base + kh * out_w;
              const T* wline = wtile + kh * spec.kernel_w;
              for (int64_t kw = 0; kw < spec.kernel_w; ++kw) line[kw] += v * wline[kw];
            }
          }
        }
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> convtranspose2d_forward_naive(const Tensor<T>& input, const Tensor<T>& weights,
                                        const Tensor<T>* bias, const ConvSpec& spec) {
  check_conv_args("convtranspose2d", input, weights, bias, spec, true);
  const int64_t N = input.batch();
  const int64_t in_h = input.height();
  const int64_t in_w = input.width();
  const int64_t out_h = spec.tconv_out_h(in_h);
  const int64_t out_w = spec.tconv_out_w(in_w);
  Tensor<T> out(N, spec.out_channels, out_h, out_w);
  // Gather form: each output element sums the input positions whose scattered
  // kernel covers it. A different traversal than the fast path on purpose.
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t co = 0; co < spec.out_channels; ++co) {
      for (int64_t oh = 0; oh < out_h; ++oh) {
        for (int64_t ow = 0; ow < out_w; ++ow) {
          T acc = T(0);
          for (int64_t ci = 0; ci < spec.in_channels; ++ci) {
            for (int64_t kh = 0; kh < spec.kernel_h; ++kh) {
              const int64_t sh = oh - kh;
              if (sh < 0 || sh % spec.stride_h != 0) continue;
              const int64_t ih = sh / spec.stride_h;
              if (ih >= in_h) continue;
              for (int64_t kw = 0; kw < spec.kernel_w; ++kw) {
                const int64_t sw = ow - kw;
                if (sw < 0 || sw % spec.stride_w != 0) continue;
                const int64_t iw = sw / spec.stride_w;
                if (iw >= in_w) continue;
                acc += input(n, ci, ih, iw) * weights(ci, co, kh, kw);
              }
            }
          }
          out(n, co, oh, ow) = acc + (bias ? bias->data[static_cast<size_t>(co)] : T(0));
        }
      }
    }
  }
  return out;
}

template <typename T>
ConvGrads<T> convtranspose2d_backward(const Tensor<T>& input, const Tensor<T>& weights,
                                      const ConvSpec& spec, const Tensor<T>& grad_output) {
  {
    ConvSpec nobias = spec;
    nobias.has_bias = false;
    check_conv_args("convtranspose2d_backward", input, weights,
                    static_cast<const Tensor<T>*>(nullptr), nobias, true);
  }
  const int64_t N = input.batch();
  const int64_t in_h = input.height();
  const int64_t in_w = input.width();
  const int64_t out_h = spec.tconv_out_h(in_h);
  const int64_t out_w = spec.tconv_out_w(in_w);
  const std::array<int64_t, 4> go_want{N, spec.out_channels, out_h, out_w};
  if (grad_output.shape != go_want) {
    std::ostringstream os;
    os << "convtranspose2d_backward: grad_output shaped " << shape_string(grad_output.shape)
       << ", forward output is " << shape_string(go_want);
    fail(os.str());
  }

  ConvGrads<T> g;
  g.input = Tensor<T>(N, spec.in_channels, in_h, in_w);
  g.weights = Tensor<T>(spec.in_channels, spec.out_channels, spec.kernel_h, spec.kernel_w);
  if (spec.has_bias) g.bias = Tensor<T>(1, spec.out_channels, 1, 1);

  // d/dinput: gathers the kernel window back out of grad_output.
  parallel_for(N * spec.in_channels, [&](int64_t t0, int64_t t1) {
    for (int64_t task = t0; task < t1; ++task) {
      const int64_t n = task / spec.in_channels;
      const int64_t ci = task % spec.in_channels;
      T* giplane = g.input.plane(n, ci);
      for (int64_t ih = 0; ih < in_h; ++ih) {
        for (int64_t iw = 0; iw < in_w; ++iw) {
          T acc = T(0);
          for (int64_t co = 0; co < spec.out_channels; ++co) {
            const T* goplane = grad_output.plane(n, co);
            const T* wtile = weights.data.data() +
                             (ci * spec.out_channels + co) * spec.kernel_h * spec.kernel_w;
            const T* base = goplane + (ih * spec.stride_h) * out_w + iw * spec.stride_w;
            for (int64_t kh = 0; kh < spec.kernel_h; ++kh) {
              const T* line = base + kh * out_w;
              const T* wline = wtile + kh * spec.kernel_w;
              for (int64_t kw = 0; kw < spec.kernel_w; ++kw) acc += line[kw] * wline[kw];
            }
          }
          giplane[ih * in_w + iw] = acc;
        }
      }
    }
  });

  // d/dweights: each (ci, co) kernel tile accumulates over (n, ih, iw).
  parallel_for(spec.in_channels * spec.out_channels, [&](int64_t t0, int64_t t1) {
    for (int64_t task = t0; task < t1; ++task) {
      const int64_t ci = task / spec.out_channels;
      const int64_t co = task % spec.out_channels;
      T* gwtile =
          g.weights.data.data() + (ci * spec.out_channels + co) * spec.kernel_h * spec.kernel_w;
      for (int64_t n = 0; n < N; ++n) {
        const T* iplane = input.plane(n, ci);
        const T* goplane = grad_output.plane(n, co);
        for (int64_t ih = 0; ih < in_h; ++ih) {
          for (int64_t iw = 0; iw < in_w; ++iw) {
            const T v = iplane[ih * in_w + iw];
            const T* base = goplane + (ih * spec.stride_h) * out_w + iw * spec.stride_w;
            for (int64_t kh = 0; kh < spec.kernel_h; ++kh) {
              const T* line = base + kh * out_w;
              T* gwline = gwtile + kh * spec.kernel_w;
              for (int64_t kw = 0; kw < spec.kernel_w; ++kw) gwline[kw] += v * line[kw];
            }
          }
        }
      }
    }
  });

  if (spec.has_bias) {
    parallel_for(spec.out_channels, [&](int64_t c0, int64_t c1) {
      for (int64_t co = c0; co < c1; ++co) {
        T acc = T(0);
        for (int64_t n = 0; n < N; ++n) {
          const T* goplane = grad_output.plane(n, co);
          for (int64_t i = 0; i < out_h * out_w; ++i) acc += goplane[i];
        }
        g.bias.data[static_cast<size_t>(co)] = acc;
      }
    });
  }

  apply_fault(BackwardFault::convtranspose2d, g.weights);
  return g;
}

template <typename T>
Tensor<T> prelu_forward(const Tensor<T>& input, std::span<const T> slope) {
  if (static_cast<int64_t>(slope.size()) != input.channels()) {
    std::ostringstream os;
    os << "prelu: slope length " << slope.size() << " does not match channel count "
       << input.channels();
    fail(os.str());
  }
  Tensor<T> out = Tensor<T>::zeros_like(input);
  const int64_t plane_sz = input.height() * input.width();
  for (int64_t n = 0; n < input.batch(); ++n) {
    for (int64_t c = 0; c < input.channels(); ++c) {
      const T s = slope[static_cast<size_t>(c)];
      const T* in = input.plane(n, c);
      T* o = out.plane(n, c);
      for (int64_t i = 0; i < plane_sz; ++i) o[i] = in[i] >= T(0) ? in[i] : s * in[i];
    }
  }
  return out;
}

template <typename T>
PreluGrads<T> prelu_backward(const Tensor<T>& input, std::span<const T> slope,
                             const Tensor<T>& grad_output) {
  if (static_cast<int64_t>(slope.size()) != input.channels()) {
    std::ostringstream os;
    os << "prelu_backward: slope length " << slope.size() << " does not match channel count "
       << input.channels();
    fail(os.str());
  }
  require_same_shape(input, grad_output, "prelu_backward");
  PreluGrads<T> g;
  g.input = Tensor<T>::zeros_like(input);
  g.slope.assign(slope.size(), T(0));
  const int64_t plane_sz = input.height() * input.width();
  for (int64_t n = 0; n < input.batch(); ++n) {
    for (int64_t c = 0; c < input.channels(); ++c) {
      const T s = slope[static_cast<size_t>(c)];
      const T* in = input.plane(n, c);
      const T* go = grad_output.plane(n, c);
      T* gi = g.input.plane(n, c);
      T gs = T(0);
      for (int64_t i = 0; i < plane_sz; ++i) {
        if (in[i] >= T(0)) {
          gi[i] = go[i];
        } else {
          gi[i] = s * go[i];
          gs += in[i] * go[i];
        }
      }
      g.slope[static_cast<size_t>(c)] += gs;
    }
  }
  if (backward_fault() == BackwardFault::prelu && !g.slope.empty()) g.slope[0] = -g.slope[0];
  return g;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  Tensor<T> out = Tensor<T>::zeros_like(a);
  for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] + b.data[i];
  return out;
}

template <typename T>
MseResult<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  require_same_shape(pred, target, "mse_loss");
  if (pred.batch() < 1) fail("mse_loss: batch must be at least 1");
  MseResult<T> r;
  r.grad_pred = Tensor<T>::zeros_like(pred);
  const double inv_n = 1.0 / static_cast<double>(pred.batch());
  double acc = 0.0;
  for (size_t i = 0; i < pred.data.size(); ++i) {
    const double d = static_cast<double>(pred.data[i]) - static_cast<double>(target.data[i]);
    acc += d * d;
    r.grad_pred.data[i] = static_cast<T>(2.0 * inv_n * d);
  }
  r.loss = acc * inv_n;
  if (backward_fault() == BackwardFault::mse && !r.grad_pred.data.empty()) {
    r.grad_pred.data[0] = -r.grad_pred.data[0];
  }
  return r;
}

template <typename T>
AdamState<T> adam_init(const std::vector<const Tensor<T>*>& params) {
  AdamState<T> s;
  s.m.reserve(params.size());
  s.v.reserve(params.size());
  for (const Tensor<T>* p : params) {
    s.m.push_back(Tensor<T>::zeros_like(*p));
    s.v.push_back(Tensor<T>::zeros_like(*p));
  }
  return s;
}

template <typename T>
void adam_step(const std::vector<Tensor<T>*>& params, const std::vector<const Tensor<T>*>& grads,
               AdamState<T>& state, double lr) {
  if (params.size() != grads.size() || params.size() != state.m.size() ||
      params.size() != state.v.size()) {
    fail("adam_step: parameter, gradient and state counts disagree");
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  const T beta1 = static_cast<T>(state.beta1);
  const T beta2 = static_cast<T>(state.beta2);
  const T one_m_b1 = static_cast<T>(1.0 - state.beta1);
  const T one_m_b2 = static_cast<T>(1.0 - state.beta2);
  const T inv_bc1 = static_cast<T>(1.0 / bc1);
  const T inv_bc2 = static_cast<T>(1.0 / bc2);
  const T eps = static_cast<T>(state.eps);
  const T step = static_cast<T>(lr);
  for (size_t j = 0; j < params.size(); ++j) {
    Tensor<T>& p = *params[j];
    const Tensor<T>& gt = *grads[j];
    require_same_shape(p, gt, "adam_step");
    require_same_shape(p, state.m[j], "adam_step state");
    for (size_t i = 0; i < p.data.size(); ++i) {
      T& m = state.m[j].data[i];
      T& v = state.v[j].data[i];
      const T grad = gt.data[i];
      m = beta1 * m + one_m_b1 * grad;
      v = beta2 * v + one_m_b2 * grad * grad;
      const T mhat = m * inv_bc1;
      const T vhat = v * inv_bc2;
      p.data[i] -= step * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

template <typename T>
Tensor<T> finite_difference_grad(const std::function<double(const Tensor<T>&)>& f,
                                 const Tensor<T>& x, double step) {
  Tensor<T> grad = Tensor<T>::zeros_like(x);
  Tensor<T> probe = x;
  for (size_t i = 0; i < x.data.size(); ++i) {
    const T saved = probe.data[i];
    probe.data[i] = saved + static_cast<T>(step);
    const double fp = f(probe);
    probe.data[i] = saved - static_cast<T>(step);
    const double fm = f(probe);
    probe.data[i] = saved;
    grad.data[i] = static_cast<T>((fp - fm) / (2.0 * step));
  }
  return grad;
}

#define BLOCKCS_INSTANTIATE(T)                                                                   \
  template Tensor<T> conv2d_forward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*,    \
                                       const ConvSpec&);                                        \
  template Tensor<T> conv2d_forward_naive<T>(const Tensor<T>&, const Tensor<T>&,                \
                                             const Tensor<T>*, const ConvSpec&);                \
  template ConvGrads<T> conv2d_backward<T>(const Tensor<T>&, const Tensor<T>&, const ConvSpec&, \
                                           const Tensor<T>&);                                   \
  template Tensor<T> convtranspose2d_forward<T>(const Tensor<T>&, const Tensor<T>&,             \
                                                const Tensor<T>*, const ConvSpec&);             \
  template Tensor<T> convtranspose2d_forward_naive<T>(const Tensor<T>&, const Tensor<T>&,       \
                                                      const Tensor<T>*, const ConvSpec&);       \
  template ConvGrads<T> convtranspose2d_backward<T>(const Tensor<T>&, const Tensor<T>&,         \
                                                    const ConvSpec&, const Tensor<T>&);         \
  template Tensor<T> prelu_forward<T>(const Tensor<T>&, std::span<const T>);                    \
  template PreluGrads<T> prelu_backward<T>(const Tensor<T>&, std::span<const T>,                \
                                           const Tensor<T>&);                                   \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                \
  template MseResult<T> mse_loss<T>(const Tensor<T>&, const Tensor<T>&);                        \
  template AdamState<T> adam_init<T>(const std::vector<const Tensor<T>*>&);                     \
  template void adam_step<T>(const std::vector<Tensor<T>*>&,                                    \
                             const std::vector<const Tensor<T>*>&, AdamState<T>&, double);      \
  template Tensor<T> finite_difference_grad<T>(const std::function<double(const Tensor<T>&)>&,  \
                                               const Tensor<T>&, double);

BLOCKCS_INSTANTIATE(float)
BLOCKCS_INSTANTIATE(double)

#undef BLOCKCS_INSTANTIATE

}  // namespace blockcs
