#include <blockcs/checkpoint.hpp>
#include <blockcs/eval.hpp>
#include <blockcs/image.hpp>
#include <blockcs/kernels.hpp>
#include <blockcs/model.hpp>
#include <blockcs/rng.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <doctest.h>

#include "oracle.hpp"
#include "synth.hpp"

using namespace blockcs;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.block = 4;
  cfg.rate = 0.125;
  cfg.channels = 4;
  cfg.res_blocks = 1;
  return cfg;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// independent diff-pair walk used as the blockiness oracle
double blockiness_by_lists(const Tensor<double>& img, int64_t block) {
  double straddle_sum = 0.0, interior_sum = 0.0;
  int64_t straddle_n = 0, interior_n = 0;
  const int64_t h = img.shape[2], w = img.shape[3];
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x + 1 < w; ++x) {
      const double d = std::abs(img(0, 0, y, x + 1) - img(0, 0, y, x));
      if ((x + 1) % block == 0) {
        straddle_sum += d;
        ++straddle_n;
      } else {
        interior_sum += d;
        ++interior_n;
      }
    }
  for (int64_t y = 0; y + 1 < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      const double d = std::abs(img(0, 0, y + 1, x) - img(0, 0, y, x));
      if ((y + 1) % block == 0) {
        straddle_sum += d;
        ++straddle_n;
      } else {
        interior_sum += d;
        ++interior_n;
      }
    }
  const double num = straddle_sum / static_cast<double>(straddle_n);
  const double den = interior_sum / static_cast<double>(interior_n);
  if (num == 0.0 && den == 0.0) return 1.0;
  if (den == 0.0) return std::numeric_limits<double>::infinity();
  return num / den;
}

}  // namespace

TEST_CASE("psnr closed forms") {
  Tensor<float> a(1, 1, 4, 4, 0.0f);
  CHECK(std::isinf(psnr_db(a, a)));

  // one grey level of error everywhere: MSE 1 -> 20 log10(255); double
  // pixels keep the rounding far below the 1e-9 comparison
  Tensor<double> ref(1, 1, 4, 4, 0.0);
  Tensor<double> off(1, 1, 4, 4, 1.0 / 127.5);
  CHECK(psnr_db(ref, off) == doctest::Approx(20.0 * std::log10(255.0)).epsilon(1e-9));

  // half the pixels off by 5 greys: MSE 12.5
  Tensor<double> hit = ref;
  for (int64_t x = 0; x < 4; ++x)
    for (int64_t y = 0; y < 2; ++y) hit(0, 0, y, x) = 5.0 / 127.5;
  CHECK(psnr_db(ref, hit) ==
        doctest::Approx(10.0 * std::log10(255.0 * 255.0 / 12.5)).epsilon(1e-9));

  // the float instantiation agrees to float precision
  Tensor<float> reff(1, 1, 4, 4, normalize_pixel(128));
  Tensor<float> offf(1, 1, 4, 4, normalize_pixel(129));
  CHECK(psnr_db(reff, offf) == doctest::Approx(20.0 * std::log10(255.0)).epsilon(1e-4));

  // values outside [-1, 1] clamp before scoring
  Tensor<float> white(1, 1, 4, 4, 1.0f);
  Tensor<float> blown(1, 1, 4, 4, 3.0f);
  CHECK(std::isinf(psnr_db(white, blown)));

  Tensor<float> wrong(1, 1, 2, 2, 0.0f);
  CHECK_THROWS_AS(psnr_db(a, wrong), std::invalid_argument);
}

TEST_CASE("blockiness closed forms and invariances") {
  SUBCASE("flat image scores exactly one") {
    Tensor<double> flat(1, 1, 8, 8, 0.25);
    CHECK(blockiness_index(flat, 4) == 1.0);
  }

  SUBCASE("block-constant image has infinite blockiness") {
    Tensor<double> tiles(1, 1, 8, 8);
    for (int64_t y = 0; y < 8; ++y)
      for (int64_t x = 0; x < 8; ++x)
        tiles(0, 0, y, x) = ((y / 4 + x / 4) % 2 == 0) ? 0.1 : 0.9;
    CHECK(std::isinf(blockiness_index(tiles, 4)));
  }

  SUBCASE("a generic image matches an independently coded pair walk") {
    const auto scene = synth::make_scene(17, 16, 12);
    const auto img = normalize_image(scene).cast<double>();
    const double got = blockiness_index(img, 4);
    const double want = blockiness_by_lists(img, 4);
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
    CHECK(std::isfinite(got));

    // affine pixel maps leave the index unchanged
    Tensor<double> mapped = img;
    for (auto& v : mapped.data) v = -3.5 * v + 0.75;
    CHECK(blockiness_index(mapped, 4) == doctest::Approx(got).epsilon(1e-9));
  }

  SUBCASE("geometry requirements") {
    Tensor<double> img(1, 1, 12, 12, 0.0);
    CHECK_THROWS_WITH_AS(blockiness_index(img, 5), doctest::Contains("divisible"),
                         std::invalid_argument);
    Tensor<double> one_block(1, 1, 4, 4, 0.0);
    CHECK_THROWS_AS(blockiness_index(one_block, 4), std::invalid_argument);
    CHECK_THROWS_AS(blockiness_index(img, 0), std::invalid_argument);
  }
}

TEST_CASE("the diff image rescales the largest error to white") {
  synth::TempDir dir("diff");
  Tensor<float> ref(1, 1, 4, 4, 0.0f);
  Tensor<float> cand = ref;
  cand(0, 0, 0, 0) = normalize_pixel(228);  // +100 greys
  cand(0, 0, 2, 3) = normalize_pixel(178);  // +50 greys
  const auto path = dir.file("d.pgm");
  emit_diff_image(ref, cand, path);
  const auto img = read_pgm(path);
  CHECK(img.pixels[0] == 255);
  CHECK(img.pixels[2 * 4 + 3] == 128);  // half the peak, rounded half up
  CHECK(img.pixels[1] == 0);

  emit_diff_image(ref, ref, dir.file("zero.pgm"));
  const auto zero = read_pgm(dir.file("zero.pgm"));
  for (uint8_t v : zero.pixels) CHECK(v == 0);
}

TEST_CASE("fnv1a64 matches its published test vectors") {
  CHECK(fnv1a64("", 0) == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a", 1) == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar", 6) == 0x85944171f73967e8ULL);
}

TEST_CASE("the evaluation suite scores every cell against every image") {
  synth::TempDir work("eval");
  const auto cfg = tiny_config();

  // two checkpoints: the full decoder and the affine baseline, same rate
  auto full = init_full_model<float>(cfg, 51);
  std::vector<const Tensor<float>*> fp;
  for (const auto& [n, t] : full.params()) fp.push_back(t);
  save_checkpoint(make_checkpoint(full, adam_init<float>(fp), 51, 1, 1), work.file("full.ckpt"));

  auto base = init_baseline_model<float>(cfg, 52);
  std::vector<const Tensor<float>*> bp;
  for (const auto& [n, t] : base.params()) bp.push_back(t);
  save_checkpoint(make_checkpoint(base, adam_init<float>(bp), 52, 1, 1), work.file("base.ckpt"));

  const auto test_dir = work.path / "testset";
  synth::write_corpus(test_dir, 2, 3000, 16, 16);
  // a 17x13 image exercises the center-crop path (crops to 16x12)
  write_pgm((test_dir / "odd_size.pgm").string(), synth::make_scene(9, 17, 13));

  const std::vector<EvalCellSpec> cells = {
      {cfg.rate, "full", work.file("full.ckpt")},
      {cfg.rate, "baseline", work.file("base.ckpt")},
      {0.5, "full", work.file("missing.ckpt")},
  };
  const auto report = evaluate_suite(cells, test_dir.string());

  REQUIRE(report.rows.size() == 6);  // 2 usable cells x 3 images
  REQUIRE(report.means.size() == 2);
  for (const auto& row : report.rows) {
    CHECK(std::isfinite(row.psnr_db));
    CHECK(row.psnr_db > 0.0);
    CHECK(row.blockiness > 0.0);
  }
  // rows come out ordered by (rate, method, file name)
  CHECK(report.rows[0].method == "baseline");
  CHECK(report.rows[3].method == "full");
  CHECK(report.rows[0].image <= report.rows[1].image);

  // the mean is the arithmetic mean of the per-image rows
  double acc = 0.0;
  for (int i = 3; i < 6; ++i) acc += report.rows[static_cast<size_t>(i)].psnr_db;
  const auto& full_mean = report.means[1];
  CHECK(full_mean.method == "full");
  CHECK(full_mean.psnr_db == doctest::Approx(acc / 3.0).epsilon(1e-12));

  bool noted_absent = false, noted_crop = false;
  for (const auto& n : report.notes) {
    if (n.find("absent") != std::string::npos) noted_absent = true;
    if (n.find("center-cropped") != std::string::npos && n.find("odd_size") != std::string::npos)
      noted_crop = true;
  }
  CHECK(noted_absent);
  CHECK(noted_crop);
  REQUIRE(report.fingerprints.size() == 2);
  for (const auto& f : report.fingerprints) CHECK(f.find("fnv1a64") != std::string::npos);

  SUBCASE("reports carry the data and the reference footer") {
    const auto csv_path = work.file("report.csv");
    const auto md_path = work.file("report.md");
    write_report_csv(report, csv_path);
    write_report_markdown(report, md_path);
    const auto csv = slurp(csv_path);
    const auto md = slurp(md_path);

    CHECK(csv.rfind("image,rate,method,psnr_db,blockiness", 0) == 0);
    CHECK(csv.find("Mean,") != std::string::npos);
    CHECK(csv.find("odd_size.pgm") != std::string::npos);

    CHECK(md.find("# Reconstruction quality") != std::string::npos);
    CHECK(md.find("## Measurement rate 12.5%") != std::string::npos);
    CHECK(md.find("odd_size.pgm") != std::string::npos);
    CHECK(md.find("**Mean**") != std::string::npos);

    for (const std::string& doc : {csv, md}) {
      CHECK(doc.find("22.12") != std::string::npos);
      CHECK(doc.find("25.97") != std::string::npos);
      CHECK(doc.find("28.94") != std::string::npos);
      CHECK(doc.find("33.57") != std::string::npos);
      CHECK(doc.find("1.8 dB") != std::string::npos);
      CHECK(doc.find("NOT produced by this artifact") != std::string::npos);
    }
  }

  SUBCASE("an empty test directory is an error") {
    synth::TempDir empty("evalempty");
    CHECK_THROWS_AS(evaluate_suite(cells, empty.path.string()), std::runtime_error);
  }

  SUBCASE("a checkpoint whose header disagrees with its cell is reported absent") {
    const std::vector<EvalCellSpec> wrong = {{0.9, "full", work.file("full.ckpt")}};
    const auto r = evaluate_suite(wrong, test_dir.string());
    CHECK(r.rows.empty());
    bool flagged = false;
    for (const auto& n : r.notes) flagged = flagged || n.find("absent") != std::string::npos;
    CHECK(flagged);
  }
}
