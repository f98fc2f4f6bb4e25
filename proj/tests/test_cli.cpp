// End-to-end tests of the command-line binary; the path to the built
// executable is injected as BLOCKCS_CLI_PATH at compile time.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>

#include <blockcs/image.hpp>

#include "synth.hpp"

namespace {

struct RunResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr interleaved
};

RunResult run_cli(const std::string& args) {
  const std::string cmd = std::string(BLOCKCS_CLI_PATH) + " " + args + " 2>&1";
  RunResult r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  size_t got;
  while ((got = std::fread(buf, 1, sizeof(buf), pipe)) > 0) r.output.append(buf, got);
  const int status = ::pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

const std::string kTinyModel =
    "--block 4 --rate 0.125 --channels 4 --res-blocks 1 --batch 2 --crop 8 "
    "--seed 7 --lr 1e-3";

}  // namespace

TEST_CASE("the binary demands a subcommand and rejects unknown ones") {
  CHECK(run_cli("").exit_code != 0);
  CHECK(run_cli("frobnicate").exit_code != 0);
  const auto help = run_cli("--help");
  CHECK(help.exit_code == 0);
  for (const char* sub : {"train", "eval", "reconstruct", "gradcheck", "export-matrix"}) {
    INFO("subcommand ", sub);
    CHECK(help.output.find(sub) != std::string::npos);
  }
}

TEST_CASE("gradcheck prints one verdict per operator and honors the fault switch") {
  const auto ok = run_cli("gradcheck");
  CHECK(ok.exit_code == 0);
  for (const char* op : {"conv2d", "convtranspose2d", "prelu", "mse", "model.full",
                         "model.baseline"}) {
    INFO("operator ", op);
    CHECK(ok.output.find(op) != std::string::npos);
  }
  CHECK(ok.output.find("PASS") != std::string::npos);
  CHECK(ok.output.find("FAIL") == std::string::npos);

  const auto broken = run_cli("gradcheck --self-test-fault convtranspose2d");
  CHECK(broken.exit_code == 1);
  CHECK(broken.output.find("FAIL") != std::string::npos);

  const auto impossible = run_cli("gradcheck --tolerance 0");
  CHECK(impossible.exit_code == 1);
}

TEST_CASE("train, eval, reconstruct and export-matrix cover the whole workflow") {
  synth::TempDir work("cli");
  const auto train_dir = work.path / "train";
  const auto test_dir = work.path / "test";
  const auto out_dir = work.path / "out";
  synth::write_corpus(train_dir, 3, 400, 16, 16);
  synth::write_corpus(test_dir, 2, 500, 16, 16);

  const auto full = run_cli("train --method full --data " + train_dir.string() + " --out " +
                            out_dir.string() + " " + kTinyModel + " --epochs 2");
  INFO(full.output);
  REQUIRE(full.exit_code == 0);
  const auto full_ckpt = (out_dir / "full_r0.125.ckpt").string();
  CHECK(std::filesystem::exists(full_ckpt));
  CHECK(std::filesystem::exists(out_dir / "full_r0.125_loss.csv"));
  CHECK(full.output.find("loss") != std::string::npos);

  const auto base = run_cli("train --method baseline --data " + train_dir.string() + " --out " +
                            out_dir.string() + " " + kTinyModel + " --epochs 2");
  INFO(base.output);
  REQUIRE(base.exit_code == 0);
  const auto base_ckpt = (out_dir / "baseline_r0.125.ckpt").string();
  REQUIRE(std::filesystem::exists(base_ckpt));

  SUBCASE("training is reproducible through the CLI") {
    const auto again_dir = work.path / "again";
    const auto again = run_cli("train --method full --data " + train_dir.string() + " --out " +
                               again_dir.string() + " " + kTinyModel + " --epochs 2");
    REQUIRE(again.exit_code == 0);
    CHECK(slurp((again_dir / "full_r0.125.ckpt").string()) == slurp(full_ckpt));
    CHECK(slurp((again_dir / "full_r0.125_loss.csv").string()) ==
          slurp((out_dir / "full_r0.125_loss.csv").string()));
  }

  SUBCASE("eval writes both report flavors and tolerates a dead checkpoint path") {
    const auto eval = run_cli("eval --checkpoint " + full_ckpt + " --checkpoint " + base_ckpt +
                              " --checkpoint " + (out_dir / "nope.ckpt").string() + " --test " +
                              test_dir.string() + " --out " + out_dir.string());
    INFO(eval.output);
    REQUIRE(eval.exit_code == 0);
    const auto csv = slurp((out_dir / "report.csv").string());
    const auto md = slurp((out_dir / "report.md").string());
    CHECK(csv.find("Mean,") != std::string::npos);
    CHECK(csv.find("full") != std::string::npos);
    CHECK(csv.find("baseline") != std::string::npos);
    CHECK(md.find("## Measurement rate 12.5%") != std::string::npos);
    CHECK(csv.find("absent") != std::string::npos);
    CHECK(eval.output.find("mean PSNR") != std::string::npos);
  }

  SUBCASE("reconstruct emits the image pair and its scores") {
    const auto input = (test_dir / "scene_000.pgm").string();
    const auto rec = run_cli("reconstruct --checkpoint " + full_ckpt + " --input " + input +
                             " --out " + out_dir.string());
    INFO(rec.output);
    REQUIRE(rec.exit_code == 0);
    const auto recon_path = (out_dir / "scene_000_recon.pgm").string();
    const auto diff_path = (out_dir / "scene_000_diff.pgm").string();
    REQUIRE(std::filesystem::exists(recon_path));
    REQUIRE(std::filesystem::exists(diff_path));
    CHECK(rec.output.find("PSNR") != std::string::npos);
    const auto img = blockcs::read_pgm(recon_path);
    CHECK(img.width == 16);
    CHECK(img.height == 16);
  }

  SUBCASE("export-matrix dumps one CSV row per measurement kernel") {
    const auto mat_path = (out_dir / "matrix.csv").string();
    const auto exp = run_cli("export-matrix --checkpoint " + full_ckpt + " --out " + mat_path);
    INFO(exp.output);
    REQUIRE(exp.exit_code == 0);
    std::ifstream in(mat_path);
    std::string line;
    int rows = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      ++rows;
      CHECK(std::count(line.begin(), line.end(), ',') == 15);  // 16 entries for B = 4
    }
    CHECK(rows == 2);  // M = 2 kernels at rate 0.125
  }

  SUBCASE("a resumed CLI run continues to the requested epoch count") {
    const auto resume_out = work.path / "resumed";
    const auto resumed =
        run_cli("train --method full --data " + train_dir.string() + " --out " +
                resume_out.string() + " --resume " + full_ckpt + " " + kTinyModel +
                " --epochs 4");
    INFO(resumed.output);
    REQUIRE(resumed.exit_code == 0);
    CHECK(std::filesystem::exists(resume_out / "full_r0.125.ckpt"));
  }
}

TEST_CASE("failures surface as error lines and nonzero exits") {
  synth::TempDir work("clierr");
  const auto r1 = run_cli("train --method full --data " + work.file("missing_dir") + " --out " +
                          work.file("out"));
  CHECK(r1.exit_code == 1);
  CHECK(r1.output.find("error:") != std::string::npos);

  const auto r2 = run_cli("reconstruct --checkpoint " + work.file("nope.ckpt") + " --input " +
                          work.file("nope.pgm") + " --out " + work.file("out"));
  CHECK(r2.exit_code == 1);
  CHECK(r2.output.find("error:") != std::string::npos);

  const auto r3 = run_cli("train --method full");  // --data is required
  CHECK(r3.exit_code != 0);
}
