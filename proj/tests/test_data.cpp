#include <blockcs/dataset.hpp>
#include <blockcs/image.hpp>
#include <blockcs/rng.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <doctest.h>

#include "synth.hpp"

using namespace blockcs;

namespace {

void write_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// a PGM whose every pixel is `value`
void write_constant_pgm(const std::string& path, int64_t w, int64_t h, uint8_t value) {
  GrayImage img;
  img.width = w;
  img.height = h;
  img.pixels.assign(static_cast<size_t>(w * h), value);
  write_pgm(path, img);
}

}  // namespace

TEST_CASE("pixel normalization maps 0..255 onto [-1, 1] and inverts exactly") {
  CHECK(normalize_pixel(0) == doctest::Approx(-1.0f));
  CHECK(normalize_pixel(255) == doctest::Approx(1.0f));
  CHECK(normalize_pixel(128) == doctest::Approx(128.0f / 127.5f - 1.0f));
  for (int v = 0; v <= 255; ++v)
    CHECK(denormalize_pixel(normalize_pixel(static_cast<uint8_t>(v))) == v);
  // out-of-range values clamp instead of wrapping
  CHECK(denormalize_pixel(-2.0f) == 0);
  CHECK(denormalize_pixel(2.0f) == 255);
}

TEST_CASE("PGM files round-trip byte for byte") {
  synth::TempDir dir("pgm");
  const auto img = synth::make_scene(3, 20, 14);
  const auto path = dir.file("scene.pgm");
  write_pgm(path, img);
  const auto back = read_pgm(path);
  REQUIRE(back.width == img.width);
  REQUIRE(back.height == img.height);
  CHECK(back.pixels == img.pixels);

  const auto tensor = load_image_tensor(path);
  REQUIRE(tensor.shape == std::array<int64_t, 4>{1, 1, 14, 20});
  for (int64_t y = 0; y < 14; ++y)
    for (int64_t x = 0; x < 20; ++x)
      CHECK(tensor(0, 0, y, x) ==
            doctest::Approx(normalize_pixel(img.pixels[static_cast<size_t>(y * 20 + x)])));
}

TEST_CASE("PGM headers accept comments and arbitrary whitespace") {
  synth::TempDir dir("pgmhdr");
  const auto path = dir.file("weird.pgm");
  std::string bytes = "P5 # magic\n# a comment line\n  2\t# width\n 2\n# about to give maxval\n255\n";
  const uint8_t raster[] = {0x00, 0x40, 0x80, 0xFF};
  bytes.append(reinterpret_cast<const char*>(raster), sizeof(raster));
  write_bytes(path, bytes);
  const auto img = read_pgm(path);
  REQUIRE(img.width == 2);
  REQUIRE(img.height == 2);
  CHECK(img.pixels == std::vector<uint8_t>{0x00, 0x40, 0x80, 0xFF});
}

TEST_CASE("PPM color input collapses to unrounded BT.601 luma") {
  synth::TempDir dir("ppm");
  const auto path = dir.file("tiny.ppm");
  std::string bytes = "P6\n2 1\n255\n";
  const uint8_t raster[] = {255, 0, 0, 10, 200, 30};
  bytes.append(reinterpret_cast<const char*>(raster), sizeof(raster));
  write_bytes(path, bytes);
  const auto t = load_image_tensor(path);
  REQUIRE(t.shape == std::array<int64_t, 4>{1, 1, 1, 2});
  const double luma0 = 0.299 * 255.0;
  const double luma1 = 0.299 * 10.0 + 0.587 * 200.0 + 0.114 * 30.0;
  CHECK(t(0, 0, 0, 0) == doctest::Approx(luma0 / 127.5 - 1.0).epsilon(1e-6));
  CHECK(t(0, 0, 0, 1) == doctest::Approx(luma1 / 127.5 - 1.0).epsilon(1e-6));
}

TEST_CASE("malformed image files are rejected with a reason") {
  synth::TempDir dir("badimg");

  const auto deep = dir.file("deep.pgm");
  write_bytes(deep, "P5\n2 2\n65535\n\x00\x00\x00\x00\x00\x00\x00\x00");
  CHECK_THROWS_WITH_AS(load_image_tensor(deep), doctest::Contains("16-bit"),
                       std::runtime_error);

  const auto magic = dir.file("magic.pgm");
  write_bytes(magic, "P7\n2 2\n255\n\x00\x00\x00\x00");
  CHECK_THROWS_AS(load_image_tensor(magic), std::runtime_error);

  const auto cut = dir.file("cut.pgm");
  write_bytes(cut, "P5\n4 4\n255\n\x01\x02\x03");
  CHECK_THROWS_WITH_AS(load_image_tensor(cut), doctest::Contains("truncated"),
                       std::runtime_error);

  const auto missing = dir.file("not_there.pgm");
  CHECK_THROWS_AS(load_image_tensor(missing), std::runtime_error);
}

TEST_CASE("tensors write back as clamped quantized PGM") {
  synth::TempDir dir("tback");
  Tensor<float> t(1, 1, 1, 4);
  t(0, 0, 0, 0) = -1.5f;  // below range: clamps to 0
  t(0, 0, 0, 1) = -1.0f;
  t(0, 0, 0, 2) = 0.0f;  // 127.5 rounds half up to 128
  t(0, 0, 0, 3) = 1.5f;  // above range: clamps to 255
  const auto path = dir.file("t.pgm");
  write_pgm(path, t);
  const auto img = read_pgm(path);
  CHECK(img.pixels == std::vector<uint8_t>{0, 0, 128, 255});
}

TEST_CASE("directory loading filters by extension and sorts by filename") {
  synth::TempDir dir("ds");
  write_constant_pgm(dir.file("b_scene.pgm"), 8, 8, 20);
  write_constant_pgm(dir.file("a_scene.PGM"), 8, 8, 10);
  write_constant_pgm(dir.file("c_scene.pgm"), 8, 8, 30);
  write_bytes(dir.file("notes.txt"), "not an image");

  const auto ds = Dataset::load_dir(dir.path.string());
  REQUIRE(ds.records.size() == 3);
  CHECK(ds.records[0].path.ends_with("a_scene.PGM"));
  CHECK(ds.records[1].path.ends_with("b_scene.pgm"));
  CHECK(ds.records[2].path.ends_with("c_scene.pgm"));
  CHECK(ds.records[0].pixels(0, 0, 0, 0) == doctest::Approx(normalize_pixel(10)));

  synth::TempDir empty("dsempty");
  CHECK_THROWS_WITH_AS(Dataset::load_dir(empty.path.string()),
                       doctest::Contains("no .pgm or .ppm images"), std::runtime_error);
}

TEST_CASE("random crops stay in bounds and consume two draws per crop") {
  synth::TempDir dir("crop");
  const auto path = dir.file("img.pgm");
  write_pgm(path, synth::make_scene(5, 13, 11));
  const auto record = load_image(path);

  Xoshiro256 rng(77);
  Xoshiro256 shadow(77);
  for (int i = 0; i < 50; ++i) {
    const auto crop = random_crop(record, 8, rng);
    REQUIRE(crop.shape == std::array<int64_t, 4>{1, 1, 8, 8});
    const int64_t row = static_cast<int64_t>(shadow.bounded(11 - 8 + 1));
    const int64_t col = static_cast<int64_t>(shadow.bounded(13 - 8 + 1));
    for (int64_t y = 0; y < 8; ++y)
      for (int64_t x = 0; x < 8; ++x)
        CHECK(crop(0, 0, y, x) == record.pixels(0, 0, row + y, col + x));
  }

  CHECK_THROWS_WITH_AS(random_crop(record, 16, rng), doctest::Contains("img.pgm"),
                       std::invalid_argument);
}

TEST_CASE("batches follow the seeded shuffle-and-crop recipe exactly") {
  synth::TempDir dir("batch");
  // constant-valued images make the shuffled order observable in the batches
  const std::vector<uint8_t> values = {10, 20, 30, 40, 50, 60};
  for (size_t i = 0; i < values.size(); ++i) {
    std::string name = "img_";
    name += static_cast<char>('0' + i);
    name += ".pgm";
    write_constant_pgm(dir.file(name), 16, 16, values[i]);
  }
  const auto ds = Dataset::load_dir(dir.path.string());
  REQUIRE(ds.records.size() == 6);

  BatchIterator it(ds, 8, 4, 123);
  CHECK(it.batches_per_epoch() == 2);  // ceil(6 / 4)

  // reference order: Fisher-Yates with the epoch-0 stream of the same seed
  std::vector<int64_t> expect = {0, 1, 2, 3, 4, 5};
  Xoshiro256 shadow(123, 0);
  for (int64_t i = 5; i >= 1; --i)
    std::swap(expect[static_cast<size_t>(i)],
              expect[static_cast<size_t>(shadow.bounded(static_cast<uint64_t>(i) + 1))]);

  const auto b0 = it.next_batch();
  const auto b1 = it.next_batch();
  REQUIRE(b0.shape == std::array<int64_t, 4>{4, 1, 8, 8});
  REQUIRE(b1.shape == std::array<int64_t, 4>{2, 1, 8, 8});  // short tail kept

  std::vector<int64_t> seen;
  for (int64_t n = 0; n < 4; ++n) {
    const float v = b0(n, 0, 0, 0);
    for (size_t k = 0; k < values.size(); ++k)
      if (v == doctest::Approx(normalize_pixel(values[k]))) seen.push_back(static_cast<int64_t>(k));
  }
  for (int64_t n = 0; n < 2; ++n) {
    const float v = b1(n, 0, 0, 0);
    for (size_t k = 0; k < values.size(); ++k)
      if (v == doctest::Approx(normalize_pixel(values[k]))) seen.push_back(static_cast<int64_t>(k));
  }
  REQUIRE(seen.size() == 6);
  CHECK(seen == expect);

  // after the tail batch the iterator rolled into epoch 1 by itself
  const auto b2 = it.next_batch();
  CHECK(it.epoch() == 1);
  REQUIRE(b2.shape == std::array<int64_t, 4>{4, 1, 8, 8});

  // the whole sequence replays from a fresh iterator with the same seed
  BatchIterator replay(ds, 8, 4, 123);
  const auto r0 = replay.next_batch();
  const auto r1 = replay.next_batch();
  const auto r2 = replay.next_batch();
  CHECK(r0.data == b0.data);
  CHECK(r1.data == b1.data);
  CHECK(r2.data == b2.data);

  // a different seed reshuffles
  BatchIterator other(ds, 8, 4, 124);
  bool differs = false;
  const auto o0 = other.next_batch();
  for (int64_t n = 0; n < 4 && !differs; ++n) differs = o0(n, 0, 0, 0) != b0(n, 0, 0, 0);
  CHECK(differs);

  // records smaller than the crop are rejected up front
  write_constant_pgm(dir.file("small.pgm"), 4, 4, 70);
  const auto with_small = Dataset::load_dir(dir.path.string());
  CHECK_THROWS_AS(BatchIterator(with_small, 8, 4, 123), std::invalid_argument);
}
