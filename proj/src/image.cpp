#include "blockcs/image.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace blockcs {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& why) {
  throw std::runtime_error(path + ": " + why);
}

bool is_pnm_space(int ch) { return ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n'; }

// Skips whitespace and '#'-to-end-of-line comments, then reads one
// non-negative decimal header field.
int64_t read_header_int(std::istream& in, const std::string& path, const char* field) {
  int ch = in.get();
  while (ch != EOF && (is_pnm_space(ch) || ch == '#')) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
    }
    ch = in.get();
  }
  if (ch == EOF || ch < '0' || ch > '9') {
    fail(path, std::string("malformed header: expected ") + field);
  }
  int64_t value = 0;
  while (ch >= '0' && ch <= '9') {
    value = value * 10 + (ch - '0');
    if (value > (int64_t(1) << 31)) fail(path, std::string(field) + " is out of range");
    ch = in.get();
  }
  if (ch != EOF) in.unget();
  return value;
}

struct PnmHeader {
  bool color = false;  // P6
  int64_t width = 0;
  int64_t height = 0;
};

PnmHeader read_pnm_header(std::istream& in, const std::string& path, bool allow_color) {
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (!in || m0 != 'P' || (m1 != '5' && m1 != '6')) {
    fail(path, "unsupported format (binary PGM \"P5\" or PPM \"P6\" required)");
  }
  PnmHeader h;
  h.color = (m1 == '6');
  if (h.color && !allow_color) fail(path, "unsupported format (binary PGM \"P5\" required)");
  h.width = read_header_int(in, path, "width");
  h.height = read_header_int(in, path, "height");
  const int64_t maxval = read_header_int(in, path, "maxval");
  if (h.width <= 0 || h.height <= 0) fail(path, "image extents must be positive");
  if (maxval != 255) {
    std::ostringstream os;
    if (maxval > 255) {
      os << "16-bit samples are unsupported (maxval " << maxval << ", expected 255)";
    } else {
      os << "maxval " << maxval << " is unsupported (expected 255)";
    }
    fail(path, os.str());
  }
  // Exactly one whitespace byte separates the header from the raster.
  const int sep = in.get();
  if (sep == EOF || !is_pnm_space(sep)) fail(path, "missing separator before pixel data");
  return h;
}

std::vector<uint8_t> read_raster(std::istream& in, const std::string& path, int64_t count) {
  std::vector<uint8_t> bytes(static_cast<size_t>(count));
  in.read(reinterpret_cast<char*>(bytes.data()), count);
  if (in.gcount() != count) fail(path, "truncated pixel data");
  return bytes;
}

}  // namespace

float normalize_pixel(uint8_t v) { return static_cast<float>(v) / 127.5f - 1.0f; }

uint8_t denormalize_pixel(float x) {
  const long v = std::lround((static_cast<double>(x) + 1.0) * 127.5);
  if (v < 0) return 0;
  if (v > 255) return 255;
  return static_cast<uint8_t>(v);
}

Tensor<float> load_image_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open file");
  const PnmHeader h = read_pnm_header(in, path, /*allow_color=*/true);
  Tensor<float> out(1, 1, h.height, h.width);
  if (!h.color) {
    const std::vector<uint8_t> bytes = read_raster(in, path, h.width * h.height);
    for (size_t i = 0; i < bytes.size(); ++i) out.data[i] = normalize_pixel(bytes[i]);
  } else {
    const std::vector<uint8_t> bytes = read_raster(in, path, 3 * h.width * h.height);
    for (size_t i = 0; i < out.data.size(); ++i) {
      const double luma = 0.299 * bytes[3 * i] + 0.587 * bytes[3 * i + 1] +
                          0.114 * bytes[3 * i + 2];
      out.data[i] = static_cast<float>(luma / 127.5 - 1.0);
    }
  }
  return out;
}

GrayImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open file");
  const PnmHeader h = read_pnm_header(in, path, /*allow_color=*/false);
  GrayImage img;
  img.width = h.width;
  img.height = h.height;
  img.pixels = read_raster(in, path, h.width * h.height);
  return img;
}

void write_pgm(const std::string& path, const GrayImage& image) {
  if (image.width <= 0 || image.height <= 0 ||
      static_cast<int64_t>(image.pixels.size()) != image.width * image.height) {
    throw std::invalid_argument(path + ": image buffer does not match its extents");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot open file for writing");
  out << "P5\n" << image.width << " " << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) fail(path, "write failed");
}

void write_pgm(const std::string& path, const Tensor<float>& image) {
  write_pgm(path, denormalize_image(image));
}

Tensor<float> normalize_image(const GrayImage& image) {
  Tensor<float> out(1, 1, image.height, image.width);
  for (size_t i = 0; i < image.pixels.size(); ++i) out.data[i] = normalize_pixel(image.pixels[i]);
  return out;
}

GrayImage denormalize_image(const Tensor<float>& image) {
  if (image.batch() != 1 || image.channels() != 1) {
    throw std::invalid_argument("denormalize_image: tensor shaped " +
                                shape_string(image.shape) + ", expected 1 x 1 x H x W");
  }
  GrayImage out;
  out.width = image.width();
  out.height = image.height();
  out.pixels.resize(static_cast<size_t>(out.width * out.height));
  for (size_t i = 0; i < out.pixels.size(); ++i) out.pixels[i] = denormalize_pixel(image.data[i]);
  return out;
}

}  // namespace blockcs
