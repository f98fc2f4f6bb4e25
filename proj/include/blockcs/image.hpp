#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "blockcs/tensor.hpp"

namespace blockcs {

// Grayscale image I/O and the [-1, 1] pixel normalization used everywhere
// downstream. Interchange formats: binary PGM (P5) for grayscale, binary
// PPM (P6) for color input, both with maxval 255. Color collapses to luma
// 0.299 R + 0.587 G + 0.114 B at load time.

struct GrayImage {
  int64_t width = 0;
  int64_t height = 0;
  std::vector<uint8_t> pixels;  // row-major
};

// 8-bit value -> [-1, 1]: v / 127.5 - 1.
float normalize_pixel(uint8_t v);
// Inverse map, rounded half up and clamped to [0, 255].
uint8_t denormalize_pixel(float x);

// Reads a P5 or P6 file; header whitespace and '#' comments are accepted,
// maxval must be 255 (16-bit data is rejected as unsupported). The result is
// normalized, shaped 1 x 1 x H x W.
Tensor<float> load_image_tensor(const std::string& path);

// Byte-level P5 reader for fixtures and tools (P5 only, maxval 255).
GrayImage read_pgm(const std::string& path);

void write_pgm(const std::string& path, const GrayImage& image);
// Denormalizes (with clamping) and writes one channel plane.
void write_pgm(const std::string& path, const Tensor<float>& image);

Tensor<float> normalize_image(const GrayImage& image);
GrayImage denormalize_image(const Tensor<float>& image);

}  // namespace blockcs
