#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "blockcs/checkpoint.hpp"
#include "blockcs/dataset.hpp"
#include "blockcs/model.hpp"

namespace blockcs {

// Adam training of either model family. One run is fully determined by
// (config, dataset contents, seed): batch order, crops, initialization and
// the whole loss history are reproducible bit for bit.

struct TrainConfig {
  ModelConfig model;
  double lr = 1e-4;
  int64_t epochs = 200;
  int64_t batch_size = 8;   // T in the loss: mean over the batch of summed
                            // squared residuals, so lr interacts with crop
                            // area (documented in the README)
  int64_t crop_size = 64;   // must be a multiple of model.block
  uint64_t seed = 0;
  int64_t steps_per_epoch = 0;  // 0 -> ceil(dataset size / batch_size)
  std::string checkpoint_path;  // written after the final epoch when set
  int64_t log_every = 50;       // progress callback cadence, steps
  bool clip_gradients = false;  // rescale to global norm 10 when above it

  void validate() const;
};

struct TrainResult {
  Checkpoint checkpoint;
  // (step, loss) per optimizer step; steps count from 1 across resumes.
  std::vector<std::pair<int64_t, double>> loss_history;
};

using ProgressFn = std::function<void(int64_t step, int64_t epoch, double loss)>;

// Trains from scratch, or continues `resume` up to config.epochs total
// epochs. A non-finite loss aborts with an error naming the step.
TrainResult train_full(const TrainConfig& config, const Dataset& data,
                       const Checkpoint* resume = nullptr, const ProgressFn& progress = {});
TrainResult train_baseline(const TrainConfig& config, const Dataset& data,
                           const Checkpoint* resume = nullptr, const ProgressFn& progress = {});

// "step,loss" CSV with round-trippable float formatting.
void write_loss_csv(const std::string& path,
                    const std::vector<std::pair<int64_t, double>>& history);

}  // namespace blockcs
