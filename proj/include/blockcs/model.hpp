#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "blockcs/kernels.hpp"
#include "blockcs/tensor.hpp"

namespace blockcs {

// Compressed-sensing model family: a learned block measurement operator plus
// either the full-image reconstruction network or the block-by-block affine
// baseline. All parameters live in Tensor<T> so the optimizer and the
// checkpoint format can treat them uniformly.

struct ModelConfig {
  int64_t block = 16;      // B: measurement block edge, pixels
  double rate = 0.25;      // r: fraction of B*B coefficients kept, in (0, 1]
  int64_t channels = 32;   // c: feature width of the reconstruction trunk
  int64_t res_blocks = 5;  // K: residual blocks in the trunk

  // M = max(1, round(r * B^2)), round half up. Never below one measurement.
  int64_t measurements() const;
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

// M learned B x B analysis kernels applied blockwise (stride B, no bias), so
// measurement column (i, j) sees exactly the pixels of block (i, j).
template <typename T>
struct MeasurementOp {
  int64_t block = 0;
  Tensor<T> weight;  // M x 1 x B x B

  ConvSpec spec() const;
  // image N x 1 x H x W with B | H, B | W  ->  N x M x H/B x W/B
  Tensor<T> apply(const Tensor<T>& image) const;
};

template <typename T>
struct ConvParams {
  Tensor<T> weight;
  Tensor<T> bias;
};

template <typename T>
struct ResBlockParams {
  ConvParams<T> conv1;
  Tensor<T> slope;  // 1 x c x 1 x 1, PReLU between the two convolutions
  ConvParams<T> conv2;
};

// Intermediate activations of one reconstruction forward pass, kept so the
// backward pass can rebuild every local gradient.
template <typename T>
struct ReconTrace {
  Tensor<T> initial_out;           // after the transposed convolution
  Tensor<T> lift_pre;              // lift convolution output, before PReLU
  std::vector<Tensor<T>> trunk;    // trunk[i] = input of residual block i;
                                   // trunk[K] = input of the head convolution
  std::vector<Tensor<T>> mid_pre;  // block i: first conv output, before PReLU
  std::vector<Tensor<T>> mid_act;  // block i: PReLU output (second conv input)
  Tensor<T> output;                // N x 1 x H x W
};

// Full-image decoder: transposed conv (M -> 1, kernel B, stride B) to the
// image grid, a 3x3 lift into c channels, K residual blocks
// [conv 3x3 -> PReLU -> conv 3x3] with identity skips, and a 3x3 head back
// to one channel. Every 3x3 runs stride 1, pad 1, with bias.
template <typename T>
struct ReconstructionNet {
  ModelConfig config;
  Tensor<T> initial_weight;  // M x 1 x B x B (transposed-conv layout)
  ConvParams<T> lift;        // 1 -> c
  Tensor<T> lift_slope;      // 1 x c x 1 x 1
  std::vector<ResBlockParams<T>> blocks;
  ConvParams<T> head;  // c -> 1

  Tensor<T> forward(const Tensor<T>& measurements) const;
  ReconTrace<T> forward_trace(const Tensor<T>& measurements) const;
};

// Block-by-block baseline: one affine map from the M measurements of a block
// to its B*B pixels, shared across blocks. The linear part is the same
// transposed convolution as the full model's initial layer; the bias is one
// B x B tile added to every block. No pixel crosses a block boundary.
template <typename T>
struct BaselineNet {
  ModelConfig config;
  Tensor<T> weight;  // M x 1 x B x B
  Tensor<T> bias;    // 1 x 1 x B x B

  Tensor<T> forward(const Tensor<T>& measurements) const;
};

template <typename T>
struct FullModel {
  ModelConfig config;
  MeasurementOp<T> sensor;
  ReconstructionNet<T> recon;

  // measure + reconstruct; the training and evaluation pipeline.
  Tensor<T> reconstruct(const Tensor<T>& image) const;

  std::vector<std::pair<std::string, Tensor<T>*>> params();
  std::vector<std::pair<std::string, const Tensor<T>*>> params() const;
};

template <typename T>
struct BaselineModel {
  ModelConfig config;
  MeasurementOp<T> sensor;
  BaselineNet<T> net;

  Tensor<T> reconstruct(const Tensor<T>& image) const;

  std::vector<std::pair<std::string, Tensor<T>*>> params();
  std::vector<std::pair<std::string, const Tensor<T>*>> params() const;
};

// He-style initialization: every convolution weight is uniform in
// [-sqrt(3) * sqrt(2 / fan_in), +sqrt(3) * sqrt(2 / fan_in)]; biases zero;
// PReLU slopes 0.25. Weights are drawn in params() order from one
// Xoshiro256(seed) stream, so a seed pins every parameter bit.
template <typename T>
FullModel<T> init_full_model(const ModelConfig& config, uint64_t seed);

template <typename T>
BaselineModel<T> init_baseline_model(const ModelConfig& config, uint64_t seed);

// Loss and parameter gradients of one batch: reconstruct the batch from its
// own measurements and score it against the original pixels with mse_loss.
// grads is aligned with params() order.
template <typename T>
struct ModelGrads {
  double loss = 0;
  std::vector<Tensor<T>> grads;
};

template <typename T>
ModelGrads<T> full_model_backward(const FullModel<T>& model, const Tensor<T>& batch);

template <typename T>
ModelGrads<T> baseline_model_backward(const BaselineModel<T>& model, const Tensor<T>& batch);

}  // namespace blockcs
