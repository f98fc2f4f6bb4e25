#include "blockcs/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <sstream>
#include <stdexcept>

#include "blockcs/image.hpp"

namespace blockcs {

namespace {

bool has_image_extension(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return ext == ".pgm" || ext == ".ppm";
}

void check_crop_fits(const ImageRecord& record, int64_t crop_size) {
  if (record.pixels.height() < crop_size || record.pixels.width() < crop_size) {
    std::ostringstream os;
    os << record.path << ": image " << record.pixels.width() << "x" << record.pixels.height()
       << " is smaller than crop size " << crop_size;
    throw std::invalid_argument(os.str());
  }
}

// Corner draws: row first, then column, one bounded() call each.
std::pair<int64_t, int64_t> draw_corner(const ImageRecord& record, int64_t crop_size,
                                        Xoshiro256& rng) {
  const int64_t rows = record.pixels.height() - crop_size + 1;
  const int64_t cols = record.pixels.width() - crop_size + 1;
  const int64_t row = static_cast<int64_t>(rng.bounded(static_cast<uint64_t>(rows)));
  const int64_t col = static_cast<int64_t>(rng.bounded(static_cast<uint64_t>(cols)));
  return {row, col};
}

void copy_crop(const ImageRecord& record, int64_t crop_size, int64_t row, int64_t col, float* dst) {
  const float* src = record.pixels.plane(0, 0);
  const int64_t w = record.pixels.width();
  for (int64_t y = 0; y < crop_size; ++y) {
    const float* line = src + (row + y) * w + col;
    std::copy(line, line + crop_size, dst + y * crop_size);
  }
}

}  // namespace

ImageRecord load_image(const std::string& path) {
  return ImageRecord{path, load_image_tensor(path)};
}

Dataset Dataset::load_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) {
    throw std::runtime_error(dir + ": not a directory");
  }
  std::vector<fs::path> paths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && has_image_extension(entry.path())) {
      paths.push_back(entry.path());
    }
  }
  std::sort(paths.begin(), paths.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
  if (paths.empty()) {
    throw std::runtime_error(dir + ": no .pgm or .ppm images found");
  }
  Dataset out;
  out.records.reserve(paths.size());
  for (const fs::path& p : paths) out.records.push_back(load_image(p.string()));
  return out;
}

Tensor<float> random_crop(const ImageRecord& record, int64_t crop_size, Xoshiro256& rng) {
  if (crop_size < 1) throw std::invalid_argument("random_crop: crop size must be positive");
  check_crop_fits(record, crop_size);
  const auto [row, col] = draw_corner(record, crop_size, rng);
  Tensor<float> out(1, 1, crop_size, crop_size);
  copy_crop(record, crop_size, row, col, out.plane(0, 0));
  return out;
}

BatchIterator::BatchIterator(const Dataset& data, int64_t crop_size, int64_t batch_size,
                             uint64_t seed)
    : data_(&data), crop_(crop_size), batch_(batch_size), seed_(seed) {
  if (data.records.empty()) throw std::invalid_argument("batch iterator: dataset is empty");
  if (crop_size < 1) throw std::invalid_argument("batch iterator: crop size must be positive");
  if (batch_size < 1) throw std::invalid_argument("batch iterator: batch size must be positive");
  for (const ImageRecord& r : data.records) check_crop_fits(r, crop_size);
  order_.resize(data.records.size());
  start_epoch(0);
}

void BatchIterator::start_epoch(int64_t epoch) {
  epoch_ = epoch;
  cursor_ = 0;
  rng_ = Xoshiro256(seed_, static_cast<uint64_t>(epoch));
  const int64_t n = static_cast<int64_t>(order_.size());
  for (int64_t i = 0; i < n; ++i) order_[static_cast<size_t>(i)] = i;
  for (int64_t i = n - 1; i >= 1; --i) {
    const int64_t j = static_cast<int64_t>(rng_.bounded(static_cast<uint64_t>(i + 1)));
    std::swap(order_[static_cast<size_t>(i)], order_[static_cast<size_t>(j)]);
  }
}

int64_t BatchIterator::batches_per_epoch() const {
  const int64_t n = static_cast<int64_t>(order_.size());
  return (n + batch_ - 1) / batch_;
}

Tensor<float> BatchIterator::next_batch() {
  const int64_t n = static_cast<int64_t>(order_.size());
  if (cursor_ >= n) start_epoch(epoch_ + 1);
  const int64_t count = std::min(batch_, n - cursor_);
  Tensor<float> out(count, 1, crop_, crop_);
  for (int64_t i = 0; i < count; ++i) {
    const ImageRecord& rec = data_->records[static_cast<size_t>(order_[static_cast<size_t>(cursor_ + i)])];
    const auto [row, col] = draw_corner(rec, crop_, rng_);
    copy_crop(rec, crop_, row, col, out.plane(i, 0));
  }
  cursor_ += count;
  return out;
}

}  // namespace blockcs
