#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "blockcs/rng.hpp"
#include "blockcs/tensor.hpp"

namespace blockcs {

// Training-set handling: normalized images, deterministic random crops, and
// a batch iterator whose whole sequence is a function of (seed, epoch).

struct ImageRecord {
  std::string path;
  Tensor<float> pixels;  // 1 x 1 x H x W in [-1, 1]
};

ImageRecord load_image(const std::string& path);

struct Dataset {
  std::vector<ImageRecord> records;

  // Loads every *.pgm / *.ppm file in `dir`, ordered by filename. Throws when
  // none are found.
  static Dataset load_dir(const std::string& dir);
};

// Uniform crop with the top-left corner drawn as row then column, each via
// one bounded() call. Throws when the image is smaller than the crop.
Tensor<float> random_crop(const ImageRecord& record, int64_t crop_size, Xoshiro256& rng);

// Batches for one training run. Each epoch e reseeds its own Xoshiro256
// (seed, stream = e) generator, Fisher-Yates shuffles the record order, and
// then draws one (row, column) corner pair per emitted crop. ceil(n / T)
// batches per epoch; the tail batch keeps its short size. After the last
// batch of an epoch the iterator rolls into epoch e + 1 by itself.
class BatchIterator {
 public:
  BatchIterator(const Dataset& data, int64_t crop_size, int64_t batch_size, uint64_t seed);

  void start_epoch(int64_t epoch);
  int64_t batches_per_epoch() const;
  int64_t epoch() const { return epoch_; }
  Tensor<float> next_batch();

 private:
  const Dataset* data_;
  int64_t crop_;
  int64_t batch_;
  uint64_t seed_;
  int64_t epoch_ = 0;
  int64_t cursor_ = 0;  // next record position within order_
  std::vector<int64_t> order_;
  Xoshiro256 rng_{0};
};

}  // namespace blockcs
