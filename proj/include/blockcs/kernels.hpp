#pragma once

#include <functional>
#include <span>
#include <vector>

#include "blockcs/tensor.hpp"

namespace blockcs {

// Forward and backward kernels for the networks in this project. Every kernel
// runs in a fixed accumulation order, so results are bit-identical across
// runs and across worker counts on the same build.
//
// Layouts: conv weights are C_out x C_in x kH x kW; transposed-conv weights
// are C_in x C_out x kH x kW. A bias, when present, holds one value per
// output channel and is stored as 1 x C x 1 x 1.

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> weights;
  Tensor<T> bias;  // empty when the ConvSpec has no bias
};

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weights,
                         const Tensor<T>* bias, const ConvSpec& spec);

// Reference path: literal nested loops over the receptive field. Kept in the
// module so the fast path can be checked against it.
template <typename T>
Tensor<T> conv2d_forward_naive(const Tensor<T>& input, const Tensor<T>& weights,
                               const Tensor<T>* bias, const ConvSpec& spec);

// Gradients of sum(grad_output * conv2d_forward(input, weights, bias, spec)).
template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weights,
                             const ConvSpec& spec, const Tensor<T>& grad_output);

// Transposed convolution. The ConvSpec describes this op itself: input has
// spec.in_channels, output spec.out_channels. It is the adjoint of the
// conv2d_forward whose ConvSpec swaps the two channel counts, and the conv's
// C_out x C_in weight buffer is read here as C_in x C_out unchanged.
// Only zero padding is supported.
template <typename T>
Tensor<T> convtranspose2d_forward(const Tensor<T>& input, const Tensor<T>& weights,
                                  const Tensor<T>* bias, const ConvSpec& spec);

template <typename T>
Tensor<T> convtranspose2d_forward_naive(const Tensor<T>& input, const Tensor<T>& weights,
                                        const Tensor<T>* bias, const ConvSpec& spec);

template <typename T>
ConvGrads<T> convtranspose2d_backward(const Tensor<T>& input, const Tensor<T>& weights,
                                      const ConvSpec& spec, const Tensor<T>& grad_output);

// Bias-less call spellings (a bare nullptr does not deduce T).
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weights, std::nullptr_t,
                         const ConvSpec& spec) {
  return conv2d_forward(input, weights, static_cast<const Tensor<T>*>(nullptr), spec);
}
template <typename T>
Tensor<T> conv2d_forward_naive(const Tensor<T>& input, const Tensor<T>& weights, std::nullptr_t,
                               const ConvSpec& spec) {
  return conv2d_forward_naive(input, weights, static_cast<const Tensor<T>*>(nullptr), spec);
}
template <typename T>
Tensor<T> convtranspose2d_forward(const Tensor<T>& input, const Tensor<T>& weights,
                                  std::nullptr_t, const ConvSpec& spec) {
  return convtranspose2d_forward(input, weights, static_cast<const Tensor<T>*>(nullptr), spec);
}
template <typename T>
Tensor<T> convtranspose2d_forward_naive(const Tensor<T>& input, const Tensor<T>& weights,
                                        std::nullptr_t, const ConvSpec& spec) {
  return convtranspose2d_forward_naive(input, weights, static_cast<const Tensor<T>*>(nullptr),
                                       spec);
}

// PReLU with one learned slope per channel. x >= 0 passes through; the
// derivative at exactly x == 0 is taken from the non-negative branch.
template <typename T>
Tensor<T> prelu_forward(const Tensor<T>& input, std::span<const T> slope);

template <typename T>
struct PreluGrads {
  Tensor<T> input;
  std::vector<T> slope;
};

template <typename T>
PreluGrads<T> prelu_backward(const Tensor<T>& input, std::span<const T> slope,
                             const Tensor<T>& grad_output);

// Elementwise sum (the residual skip connection).
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

// loss = (1/N) * sum_i ||pred_i - target_i||^2 where i indexes the batch and
// the norm runs over all elements of one batch item.
// grad_pred = (2/N) * (pred - target).
template <typename T>
struct MseResult {
  double loss = 0;
  Tensor<T> grad_pred;
};

template <typename T>
MseResult<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target);

// Adam with bias correction. Moment buffers are kept in the order the
// parameter list was registered; t counts completed steps.
template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  int64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
AdamState<T> adam_init(const std::vector<const Tensor<T>*>& params);

template <typename T>
void adam_step(const std::vector<Tensor<T>*>& params,
               const std::vector<const Tensor<T>*>& grads, AdamState<T>& state, double lr);

// Central finite differences (f(x+h*e_i) - f(x-h*e_i)) / (2h) per component.
// The project-wide gradient oracle; meaningful in 64-bit precision.
template <typename T>
Tensor<T> finite_difference_grad(const std::function<double(const Tensor<T>&)>& f,
                                 const Tensor<T>& x, double step);

// Self-test hook used by the gradcheck command's mutation mode: flips the
// sign of the first weight-gradient component of the named backward kernel.
enum class BackwardFault { none, conv2d, convtranspose2d, prelu, mse };
void set_backward_fault(BackwardFault fault);
BackwardFault backward_fault();

}  // namespace blockcs
