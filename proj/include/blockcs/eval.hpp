#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "blockcs/tensor.hpp"

namespace blockcs {

// Reconstruction quality metrics and the rate x method evaluation report.

// Both images are mapped to the [0, 255] domain via (x + 1) * 127.5 with
// clamping, then PSNR = 10 * log10(255^2 / MSE). Identical inputs give +inf.
template <typename T>
double psnr_db(const Tensor<T>& reference, const Tensor<T>& candidate);

// Mean absolute difference of adjacent pixel pairs that straddle a block
// boundary, divided by the same mean over non-straddling pairs. Both means
// zero -> 1.0; interior zero with nonzero boundary -> +inf. Requires at
// least two blocks per axis. Invariant under affine pixel maps a*I + b.
template <typename T>
double blockiness_index(const Tensor<T>& image, int64_t block);

struct EvalCellSpec {
  double rate = 0;
  std::string method;  // "full" or "baseline"
  std::string checkpoint_path;
};

struct EvalRow {
  std::string image;  // file name; "Mean" on aggregate rows
  double rate = 0;
  std::string method;
  double psnr_db = 0;
  double blockiness = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;   // per image, grouped by (rate, method)
  std::vector<EvalRow> means;  // one per evaluated (rate, method) cell
  std::vector<std::string> notes;         // crops, skips, absent cells
  std::vector<std::string> fingerprints;  // checkpoint content hashes
};

// Reconstructs every test image with every cell's checkpoint and scores it.
// Images whose extents are not divisible by the cell's block size are
// center-cropped to the largest divisible extents (recorded in notes).
// A cell whose checkpoint is missing or unusable becomes a note, not an
// error. Rows are ordered by (rate, method, file name).
EvalReport evaluate_suite(const std::vector<EvalCellSpec>& cells, const std::string& test_dir);

// CSV: image,rate,method,psnr_db,blockiness with '#' footer lines.
// Markdown: one table per rate, methods as column groups. Both end with the
// literature reference footer.
void write_report_csv(const EvalReport& report, const std::string& path);
void write_report_markdown(const EvalReport& report, const std::string& path);

// |reference - candidate| in the [0, 255] domain, rescaled so the largest
// difference maps to 255 (an all-zero image when they are identical), as P5.
void emit_diff_image(const Tensor<float>& reference, const Tensor<float>& candidate,
                     const std::string& path);

// FNV-1a, 64-bit; used to fingerprint checkpoint files in reports.
uint64_t fnv1a64(const void* data, size_t len);

}  // namespace blockcs
