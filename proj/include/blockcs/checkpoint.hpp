#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "blockcs/kernels.hpp"
#include "blockcs/model.hpp"

namespace blockcs {

// On-disk training state. Little-endian throughout:
//   "BCS1"  magic
//   u32     version (1)
//   u32     block, u32 measurements, u32 channels, u32 res_blocks
//   f64     rate
//   u32     tensor count, then per tensor:
//           u16 name length, name bytes, u8 ndim (always 4), u32 dims[4],
//           then prod(dims) raw little-endian f32
//   u32     blob count, then per blob:
//           u16 name length, name bytes, u64 payload length, payload bytes
// Tensors hold the parameters in params() order followed by the Adam moments
// ("adam.m.<param>", "adam.v.<param>"). Blobs hold "method" (ASCII "full" or
// "baseline") and u64 "seed", "epoch", "step", "adam.t". Saving the result of
// a load reproduces the input byte for byte.
//
// The data-order RNG is reconstructed as Xoshiro256(seed, stream = epoch) at
// every epoch start, so (seed, epoch) is the complete sampler state at an
// epoch boundary, which is the only place checkpoints are taken.

struct Checkpoint {
  ModelConfig config;
  std::string method;  // "full" or "baseline"
  uint64_t seed = 0;
  int64_t epoch = 0;  // completed epochs
  int64_t step = 0;   // completed optimizer steps
  int64_t adam_t = 0;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint make_checkpoint(const FullModel<float>& model, const AdamState<float>& adam,
                           uint64_t seed, int64_t epoch, int64_t step);
Checkpoint make_checkpoint(const BaselineModel<float>& model, const AdamState<float>& adam,
                           uint64_t seed, int64_t epoch, int64_t step);

// Rebuild a model (and, when `adam` is non-null, its optimizer state) from a
// loaded checkpoint. Every parameter tensor is looked up by name and shape-
// checked against the config; mismatches and leftovers are errors.
FullModel<float> full_from_checkpoint(const Checkpoint& ckpt, AdamState<float>* adam = nullptr);
BaselineModel<float> baseline_from_checkpoint(const Checkpoint& ckpt,
                                              AdamState<float>* adam = nullptr);

}  // namespace blockcs
