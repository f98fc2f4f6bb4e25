#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "blockcs/checkpoint.hpp"
#include "blockcs/dataset.hpp"
#include "blockcs/eval.hpp"
#include "blockcs/gradcheck.hpp"
#include "blockcs/image.hpp"
#include "blockcs/kernels.hpp"
#include "blockcs/model.hpp"
#include "blockcs/train.hpp"

namespace {

namespace fs = std::filesystem;
using namespace blockcs;

std::string rate_tag(double rate) {
  std::ostringstream os;
  os << std::setprecision(10) << rate;
  return os.str();
}

struct TrainArgs {
  TrainConfig config;
  std::string method = "full";
  std::string data_dir;
  std::string out_dir = ".";
  std::string checkpoint_path;  // empty -> derived from out_dir
  std::string resume_path;
};

int cmd_train(const TrainArgs& args) {
  TrainConfig config = args.config;
  if (args.checkpoint_path.empty()) {
    fs::create_directories(args.out_dir);
    config.checkpoint_path =
        (fs::path(args.out_dir) /
         (args.method + "_r" + rate_tag(config.model.rate) + ".ckpt")).string();
  } else {
    config.checkpoint_path = args.checkpoint_path;
  }

  const Dataset data = Dataset::load_dir(args.data_dir);
  std::cout << "training " << args.method << " model: rate " << rate_tag(config.model.rate)
            << ", block " << config.model.block << ", M " << config.model.measurements()
            << ", channels " << config.model.channels << ", res-blocks "
            << config.model.res_blocks << ", " << data.records.size() << " images\n";

  Checkpoint resume;
  const Checkpoint* resume_ptr = nullptr;
  if (!args.resume_path.empty()) {
    resume = load_checkpoint(args.resume_path);
    resume_ptr = &resume;
    std::cout << "resuming from " << args.resume_path << " (epoch " << resume.epoch << ", step "
              << resume.step << ")\n";
  }

  const auto progress = [](int64_t step, int64_t epoch, double loss) {
    std::cout << "step " << step << " (epoch " << epoch << "): loss " << std::setprecision(8)
              << loss << "\n";
  };
  const TrainResult result = args.method == "full"
                                 ? train_full(config, data, resume_ptr, progress)
                                 : train_baseline(config, data, resume_ptr, progress);

  const std::string loss_path =
      (fs::path(config.checkpoint_path).parent_path() /
       (fs::path(config.checkpoint_path).stem().string() + "_loss.csv")).string();
  write_loss_csv(loss_path, result.loss_history);
  std::cout << "checkpoint: " << config.checkpoint_path << "\n";
  std::cout << "loss history: " << loss_path << "\n";
  if (!result.loss_history.empty()) {
    std::cout << "final loss: " << std::setprecision(8) << result.loss_history.back().second
              << " after " << result.loss_history.back().first << " steps\n";
  }
  return 0;
}

int cmd_eval(const std::vector<std::string>& checkpoints, const std::string& test_dir,
             const std::string& out_dir) {
  std::vector<EvalCellSpec> cells;
  std::vector<std::string> absent;
  for (const std::string& path : checkpoints) {
    try {
      const Checkpoint ckpt = load_checkpoint(path);
      cells.push_back(EvalCellSpec{ckpt.config.rate, ckpt.method, path});
    } catch (const std::exception& e) {
      absent.push_back(std::string("checkpoint ") + path + ": absent (" + e.what() + ")");
    }
  }
  EvalReport report = evaluate_suite(cells, test_dir);
  report.notes.insert(report.notes.begin(), absent.begin(), absent.end());

  fs::create_directories(out_dir);
  const std::string csv_path = (fs::path(out_dir) / "report.csv").string();
  const std::string md_path = (fs::path(out_dir) / "report.md").string();
  write_report_csv(report, csv_path);
  write_report_markdown(report, md_path);

  for (const EvalRow& r : report.means) {
    std::cout << "rate " << rate_tag(r.rate) << " " << r.method << ": mean PSNR "
              << std::setprecision(6) << r.psnr_db << " dB, mean blockiness " << r.blockiness
              << "\n";
  }
  for (const std::string& n : report.notes) std::cout << "note: " << n << "\n";
  std::cout << "report: " << csv_path << ", " << md_path << "\n";
  return 0;
}

int cmd_reconstruct(const std::string& checkpoint_path, const std::string& input_path,
                    const std::string& out_dir) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  const Tensor<float> image = load_image_tensor(input_path);
  const int64_t block = ckpt.config.block;

  const int64_t h = (image.height() / block) * block;
  const int64_t w = (image.width() / block) * block;
  if (h == 0 || w == 0) {
    throw std::runtime_error(input_path + ": image smaller than one block of " +
                             std::to_string(block));
  }
  Tensor<float> cropped(1, 1, h, w);
  const int64_t top = (image.height() - h) / 2;
  const int64_t left = (image.width() - w) / 2;
  for (int64_t y = 0; y < h; ++y) {
    const float* src = image.plane(0, 0) + (top + y) * image.width() + left;
    std::copy(src, src + w, cropped.plane(0, 0) + y * w);
  }
  if (h != image.height() || w != image.width()) {
    std::cout << "center-cropped " << image.width() << "x" << image.height() << " to " << w << "x"
              << h << " (block " << block << ")\n";
  }

  Tensor<float> recon;
  if (ckpt.method == "full") {
    recon = full_from_checkpoint(ckpt).reconstruct(cropped);
  } else {
    recon = baseline_from_checkpoint(ckpt).reconstruct(cropped);
  }

  fs::create_directories(out_dir);
  const std::string stem = fs::path(input_path).stem().string();
  const std::string recon_path = (fs::path(out_dir) / (stem + "_recon.pgm")).string();
  const std::string diff_path = (fs::path(out_dir) / (stem + "_diff.pgm")).string();
  write_pgm(recon_path, recon);
  emit_diff_image(cropped, recon, diff_path);
  std::cout << "PSNR " << std::setprecision(6) << psnr_db(cropped, recon) << " dB, blockiness ";
  if (h / block >= 2 && w / block >= 2) {
    std::cout << blockiness_index(recon, block);
  } else {
    std::cout << "n/a (needs 2x2 blocks)";
  }
  std::cout << "\n" << recon_path << "\n" << diff_path << "\n";
  return 0;
}

int cmd_gradcheck(double tolerance, const std::string& fault) {
  if (fault == "conv2d") {
    set_backward_fault(BackwardFault::conv2d);
  } else if (fault == "convtranspose2d") {
    set_backward_fault(BackwardFault::convtranspose2d);
  } else if (fault == "prelu") {
    set_backward_fault(BackwardFault::prelu);
  } else if (fault == "mse") {
    set_backward_fault(BackwardFault::mse);
  }
  const GradcheckSummary summary = run_gradcheck_suite(tolerance);
  set_backward_fault(BackwardFault::none);
  for (const GradcheckResult& r : summary.results) {
    std::cout << std::left << std::setw(18) << r.op << " worst rel err " << std::scientific
              << std::setprecision(3) << r.worst_rel_err << "  (tolerance " << r.tolerance << ") "
              << (r.passed ? "PASS" : "FAIL") << "\n";
    std::cout.unsetf(std::ios::floatfield);
  }
  return summary.all_passed() ? 0 : 1;
}

int cmd_export_matrix(const std::string& checkpoint_path, const std::string& out_path) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  const Tensor<float>* weight = nullptr;
  for (const auto& [name, t] : ckpt.tensors) {
    if (name == "measure.weight") {
      weight = &t;
      break;
    }
  }
  if (!weight) throw std::runtime_error("checkpoint: missing tensor 'measure.weight'");

  std::ofstream out(out_path);
  if (!out) throw std::runtime_error(out_path + ": cannot open for writing");
  out << std::setprecision(9);  // float32 round-trip precision
  const int64_t m = weight->batch();
  const int64_t cols = weight->height() * weight->width();
  for (int64_t i = 0; i < m; ++i) {
    const float* row = weight->plane(i, 0);
    for (int64_t j = 0; j < cols; ++j) out << (j ? "," : "") << row[j];
    out << "\n";
  }
  if (!out) throw std::runtime_error(out_path + ": write failed");
  std::cout << "wrote " << m << "x" << cols << " matrix to " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Block-based compressed sensing of grayscale images: learned measurement "
               "kernels with full-image or block-by-block reconstruction"};
  app.require_subcommand(1);

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "Train a model on a directory of images");
  train->set_config("--config", "", "Flat key=value file; explicit flags win");
  train->add_option("--rate", train_args.config.model.rate,
                    "Measurement rate in (0, 1]")->capture_default_str();
  train->add_option("--block", train_args.config.model.block,
                    "Measurement block size in pixels")->capture_default_str();
  train->add_option("--channels", train_args.config.model.channels,
                    "Feature channels in the reconstruction trunk")->capture_default_str();
  train->add_option("--res-blocks", train_args.config.model.res_blocks,
                    "Residual blocks in the reconstruction trunk")->capture_default_str();
  train->add_option("--lr", train_args.config.lr, "Adam learning rate")->capture_default_str();
  train->add_option("--epochs", train_args.config.epochs,
                    "Total epochs (resume counts toward this)")->capture_default_str();
  train->add_option("--batch", train_args.config.batch_size,
                    "Images per optimizer step")->capture_default_str();
  train->add_option("--crop", train_args.config.crop_size,
                    "Training crop size; multiple of --block")->capture_default_str();
  train->add_option("--seed", train_args.config.seed,
                    "Seed determining init, shuffles and crops")->capture_default_str();
  train->add_option("--steps-per-epoch", train_args.config.steps_per_epoch,
                    "Batches per epoch; 0 means one pass over the data")->capture_default_str();
  train->add_option("--log-every", train_args.config.log_every,
                    "Progress print cadence in steps")->capture_default_str();
  train->add_flag("--clip", train_args.config.clip_gradients,
                  "Rescale gradients above global norm 10");
  train->add_option("--method", train_args.method, "Model family")
      ->check(CLI::IsMember({"full", "baseline"}))
      ->capture_default_str();
  train->add_option("--data", train_args.data_dir, "Directory of training images (.pgm/.ppm)")
      ->required();
  train->add_option("--out", train_args.out_dir,
                    "Output directory for checkpoint and loss CSV")->capture_default_str();
  train->add_option("--checkpoint", train_args.checkpoint_path,
                    "Explicit checkpoint output path (overrides --out naming)");
  train->add_option("--resume", train_args.resume_path, "Checkpoint to continue from");

  std::vector<std::string> eval_checkpoints;
  std::string eval_test_dir, eval_out_dir = ".";
  CLI::App* eval = app.add_subcommand("eval", "Score checkpoints on a test image directory");
  eval->set_config("--config", "", "Flat key=value file; explicit flags win");
  eval->add_option("--checkpoint", eval_checkpoints,
                   "Checkpoint path; repeat for several rate/method cells")->required();
  eval->add_option("--test", eval_test_dir, "Directory of test images")->required();
  eval->add_option("--out", eval_out_dir,
                   "Output directory for report.csv and report.md")->capture_default_str();

  std::string rec_checkpoint, rec_input, rec_out_dir = ".";
  CLI::App* rec = app.add_subcommand("reconstruct",
                                     "Measure and reconstruct one image, write PGM outputs");
  rec->add_option("--checkpoint", rec_checkpoint, "Trained checkpoint")->required();
  rec->add_option("--input", rec_input, "Image to reconstruct (.pgm/.ppm)")->required();
  rec->add_option("--out", rec_out_dir, "Output directory")->capture_default_str();

  double gc_tolerance = -1.0;
  std::string gc_fault = "none";
  CLI::App* gc = app.add_subcommand(
      "gradcheck", "Finite-difference audit of every backward kernel (64-bit)");
  gc->add_option("--tolerance", gc_tolerance,
                 "Relative error bound for all ops; negative keeps per-op defaults "
                 "(1e-6 kernels, 1e-5 end-to-end)")->capture_default_str();
  gc->add_option("--self-test-fault", gc_fault,
                 "Deliberately corrupt one backward kernel to prove the audit catches it")
      ->check(CLI::IsMember({"none", "conv2d", "convtranspose2d", "prelu", "mse"}))
      ->group("");  // hidden from --help

  std::string em_checkpoint, em_out = "measurement_matrix.csv";
  CLI::App* em = app.add_subcommand("export-matrix",
                                    "Write the learned measurement kernels as an MxB^2 CSV");
  em->add_option("--checkpoint", em_checkpoint, "Trained checkpoint")->required();
  em->add_option("--out", em_out, "Output CSV path")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(train_args);
    if (eval->parsed()) return cmd_eval(eval_checkpoints, eval_test_dir, eval_out_dir);
    if (rec->parsed()) return cmd_reconstruct(rec_checkpoint, rec_input, rec_out_dir);
    if (gc->parsed()) return cmd_gradcheck(gc_tolerance, gc_fault);
    if (em->parsed()) return cmd_export_matrix(em_checkpoint, em_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
