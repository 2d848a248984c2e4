#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "udr/udr.hpp"

using namespace udr;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(UDR_CLI_PATH) + " " + args + " 2>/dev/null";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path fresh(const std::string& name) {
  auto p = fs::temp_directory_path() / ("udr_cli_test_" + std::to_string(getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p.parent_path());
  return p;
}

std::string bytes(const fs::path& p) { return io::detail::read_file(p); }

bool same_tree(const fs::path& a, const fs::path& b) {
  std::vector<fs::path> fa, fb;
  for (auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) fa.push_back(fs::relative(e.path(), a));
  for (auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) fb.push_back(fs::relative(e.path(), b));
  std::sort(fa.begin(), fa.end());
  std::sort(fb.begin(), fb.end());
  if (fa != fb) return false;
  for (auto& f : fa)
    if (bytes(a / f) != bytes(b / f)) return false;
  return true;
}

std::vector<std::vector<std::string>> table(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string c;
    while (std::getline(ls, c, '\t')) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

const char* kSmallModel = "--blocks 1 --channels 4 --tokens 2";

}  // namespace

TEST(CliSimulate, FullSamplingKeepsAllKspace) {
  auto d = fresh("sim_full");
  ASSERT_EQ(run("simulate --size 16,16 --accel 1 --slices 2 --seed 3 --out " + d.string()).code, 0);
  auto y = io::load_stack(d / "slice_001" / "kspace.mrk");
  auto truth = io::load_image(d / "slice_001" / "truth.mrk");
  ASSERT_EQ(y.size(), 1u);
  auto k = fft2c(shepp_logan(16, 16, 1));
  for (std::size_t i = 0; i < k.size(); ++i) EXPECT_NEAR(std::abs(y[0][i] - k[i]), 0.0, 1e-6);
  EXPECT_LT(max_abs_diff(truth, shepp_logan(16, 16, 1)), 1e-7);
}

TEST(CliSimulate, MaskDensity) {
  auto d = fresh("sim_density");
  ASSERT_EQ(run("simulate --size 64,64 --accel 4 --slices 3 --coils 4 --seed 1 --out " + d.string()).code, 0);
  for (const char* s : {"slice_000", "slice_001", "slice_002"}) {
    auto m = io::load_mask(d / s / "mask.mrk");
    EXPECT_NEAR(m.fraction(), 0.25, 0.025);
    EXPECT_EQ(io::load_coils(d / s / "coils.mrk").n_coils(), 4u);
  }
  data::Manifest man;
  auto slices = data::load(d, &man);
  EXPECT_EQ(slices.size(), 3u);
  EXPECT_EQ(man.coils, 4u);
}

TEST(CliSimulate, SameSeedIsByteIdentical) {
  auto a = fresh("sim_a"), b = fresh("sim_b"), c = fresh("sim_c");
  const std::string flags = "simulate --size 16,16 --accel 3 --slices 3 --contrasts 2 --coils 2 --seed 5 --out ";
  ASSERT_EQ(run(flags + a.string()).code, 0);
  ASSERT_EQ(run(flags + b.string()).code, 0);
  EXPECT_TRUE(same_tree(a, b));
  ASSERT_EQ(run("simulate --size 16,16 --accel 3 --slices 3 --contrasts 2 --coils 2 --seed 6 --out " + c.string()).code, 0);
  EXPECT_FALSE(same_tree(a, c));
}

TEST(CliSimulate, UsageErrors) {
  auto d = fresh("sim_bad");
  EXPECT_EQ(run("simulate --size 16,16 --accel 0.5 --out " + d.string()).code, 2);
  EXPECT_EQ(run("simulate --size 16 --out " + d.string()).code, 2);
  EXPECT_EQ(run("simulate --size 16,16").code, 2);
  EXPECT_EQ(run("simulate --size 16,16 --accel 40 --out " + d.string()).code, 2);
  EXPECT_EQ(run("simulate --size 8,8 --accel 1 --out " + d.string()).code, 2);
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("bogus").code, 2);
}

TEST(CliSimulate, DumpConfig) {
  auto r = run("simulate --size 24,16 --accel 3 --seed 9 --out x --dump-config");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("size=24,16\n"), std::string::npos);
  EXPECT_NE(r.out.find("accel=3\n"), std::string::npos);
  EXPECT_NE(r.out.find("seed=9\n"), std::string::npos);
  EXPECT_FALSE(fs::exists("x"));
}

TEST(CliTrain, ZeroStepsWritesInitialCheckpoint) {
  auto d = fresh("train0_data"), o = fresh("train0_out");
  ASSERT_EQ(run("simulate --size 16,16 --slices 2 --seed 1 --out " + d.string()).code, 0);
  ASSERT_EQ(run("train --data " + d.string() + " --steps 0 --seed 4 " + kSmallModel + " --out " + o.string()).code, 0);
  auto ck = io::load_checkpoint(o / "checkpoint.udr");
  EXPECT_EQ(ck.step, 0);
  EXPECT_EQ(ck.params.tensors, init_denoiser({1, 4, 2, 1}, 4).tensors);
  EXPECT_EQ(fs::file_size(o / "loss_trace.tsv"), 0u);
}

TEST(CliTrain, MissingDatasetIsUsageError) {
  auto o = fresh("train_missing");
  EXPECT_EQ(run("train --data /nonexistent/udr --steps 1 --out " + o.string()).code, 2);
}

TEST(CliTrain, ResumeReproducesContinuation) {
  auto d = fresh("resume_data"), full = fresh("resume_full"), part = fresh("resume_part");
  ASSERT_EQ(run("simulate --size 16,16 --slices 3 --seed 2 --out " + d.string()).code, 0);
  const std::string base = "train --data " + d.string() + " --seed 8 " + kSmallModel + " --ckpt-every 3";
  ASSERT_EQ(run(base + " --steps 6 --out " + full.string()).code, 0);
  ASSERT_EQ(run(base + " --steps 3 --out " + part.string()).code, 0);
  ASSERT_EQ(run(base + " --steps 6 --resume " + (part / "checkpoint.udr").string() + " --out " + part.string()).code, 0);
  EXPECT_EQ(bytes(full / "loss_trace.tsv"), bytes(part / "loss_trace.tsv"));
  EXPECT_EQ(bytes(full / "checkpoint.udr"), bytes(part / "checkpoint.udr"));
  EXPECT_EQ(bytes(full / "ckpt_6.udr"), bytes(part / "ckpt_6.udr"));

  // a resume under a different configuration is a checkpoint failure
  EXPECT_EQ(run("train --data " + d.string() + " --seed 8 --blocks 2 --channels 4 --tokens 2 --steps 6 --resume " +
                (part / "ckpt_3.udr").string() + " --out " + fresh("resume_bad").string())
                .code,
            3);
}

TEST(CliTrain, Deterministic) {
  auto d = fresh("det_data"), a = fresh("det_a"), b = fresh("det_b");
  ASSERT_EQ(run("simulate --size 16,16 --slices 2 --seed 2 --out " + d.string()).code, 0);
  const std::string base = "train --data " + d.string() + " --seed 3 --steps 4 " + kSmallModel + " --out ";
  ASSERT_EQ(run(base + a.string()).code, 0);
  ASSERT_EQ(run(base + b.string()).code, 0);
  EXPECT_TRUE(same_tree(a, b));
}

class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    data_ = fresh("pipe_data");
    model_ = fresh("pipe_model");
    ASSERT_EQ(run("simulate --size 16,16 --accel 4 --slices 3 --seed 4 --out " + data_.string()).code, 0);
    ASSERT_EQ(run("train --data " + data_.string() + " --steps 5 --seed 1 " + kSmallModel + " --out " +
                  model_.string())
                  .code,
              0);
  }
  static inline fs::path data_, model_;
  std::string ckpt() const { return (model_ / "checkpoint.udr").string(); }
};

TEST_F(CliPipeline, ReconstructIsConsistentAndDeterministic) {
  auto a = fresh("rec_a"), b = fresh("rec_b");
  auto r = run("reconstruct --ckpt " + ckpt() + " --input " + data_.string() + " --seed 7 --out " + a.string());
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("slice_002\t"), std::string::npos);
  ASSERT_EQ(run("reconstruct --ckpt " + ckpt() + " --input " + data_.string() + " --seed 7 --out " + b.string()).code, 0);
  EXPECT_TRUE(same_tree(a, b));

  // stored as float32, so measured coefficients agree to single precision
  for (auto& s : data::load(data_)) {
    auto k = fft2c(io::load_image(a / (s.info.name + ".mrk")));
    for (std::size_t i = 0; i < k.size(); ++i)
      if (s.acq.mask[i]) EXPECT_LT(std::abs(k[i] - s.acq.y[0][i]), 1e-5);
  }

  // the same sampling in memory meets the double-precision tolerance
  auto ck = io::load_checkpoint(ckpt());
  auto slices = data::load(data_);
  SamplerConfig sc;
  sc.seed = data::derive_seed(7, 0, 3);
  auto rec = reconstruct(slices[0].acq.y, slices[0].acq.mask, slices[0].acq.coils, ck.params, build_schedule(1000),
                         slices[0].acq.label, sc);
  auto k = fft2c(rec.image);
  for (std::size_t i = 0; i < k.size(); ++i)
    if (slices[0].acq.mask[i]) EXPECT_LT(std::abs(k[i] - slices[0].acq.y[0][i]), 1e-9);
  EXPECT_EQ(bytes(a / "slice_000.mrk"), io::encode_stack({rec.image}, io::Kind::image));
}

TEST_F(CliPipeline, ReconstructRejectsIncompatibleCheckpoint) {
  auto d2 = fresh("rec_two_contrasts");
  ASSERT_EQ(run("simulate --size 16,16 --slices 2 --contrasts 2 --seed 4 --out " + d2.string()).code, 0);
  EXPECT_EQ(run("reconstruct --ckpt " + ckpt() + " --input " + d2.string() + " --out " + fresh("rec_x").string()).code, 3);
  auto bad = fresh("bad_ckpt");
  io::detail::write_file(bad, "garbage");
  EXPECT_EQ(run("reconstruct --ckpt " + bad.string() + " --input " + data_.string() + " --out " + fresh("rec_y").string()).code,
            3);
}

TEST_F(CliPipeline, EvaluateMatchesMetricsAndIncludesBaseline) {
  auto rec = fresh("eval_rec");
  ASSERT_EQ(run("reconstruct --ckpt " + ckpt() + " --input " + data_.string() + " --seed 2 --out " + rec.string()).code, 0);
  auto report = fresh("eval_report.tsv");
  auto r = run("evaluate --recon " + rec.string() + " --data " + data_.string() + " --out " + report.string());
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(bytes(report), r.out);
  auto rows = table(r.out);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"slice", "psnr", "ssim", "zf_psnr", "zf_ssim"}));
  auto slices = data::load(data_);
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& s = slices[k];
    auto truth = RealImage::magnitude_of(io::load_image(data_ / s.info.name / "truth.mrk"));
    auto x = RealImage::magnitude_of(io::load_image(rec / (s.info.name + ".mrk")));
    auto zf = RealImage::magnitude_of(zero_filled(s.acq.y, s.acq.coils, s.acq.mask));
    EXPECT_EQ(rows[k + 1][0], s.info.name);
    EXPECT_DOUBLE_EQ(std::stod(rows[k + 1][1]), psnr(x, truth));
    EXPECT_DOUBLE_EQ(std::stod(rows[k + 1][2]), ssim(x, truth));
    EXPECT_DOUBLE_EQ(std::stod(rows[k + 1][3]), psnr(zf, truth));
    EXPECT_DOUBLE_EQ(std::stod(rows[k + 1][4]), ssim(zf, truth));
  }
  EXPECT_EQ(rows[4][0], "mean");
}

TEST_F(CliPipeline, EvaluatePerfectReconstruction) {
  auto rec = fresh("eval_perfect");
  fs::create_directories(rec);
  for (auto& s : data::load(data_)) fs::copy_file(data_ / s.info.name / "truth.mrk", rec / (s.info.name + ".mrk"));
  auto r = run("evaluate --recon " + rec.string() + " --data " + data_.string());
  ASSERT_EQ(r.code, 0);
  auto rows = table(r.out);
  for (std::size_t k = 1; k < rows.size(); ++k) {
    EXPECT_EQ(rows[k][1], "inf");
    EXPECT_EQ(rows[k][2], "1");
    EXPECT_NE(rows[k][3], "inf");
  }
}

TEST_F(CliPipeline, EvaluateSliceCountMismatch) {
  auto rec = fresh("eval_short");
  fs::create_directories(rec);
  fs::copy_file(data_ / "slice_000" / "truth.mrk", rec / "slice_000.mrk");
  EXPECT_EQ(run("evaluate --recon " + rec.string() + " --data " + data_.string()).code, 2);
}

TEST_F(CliPipeline, DumpConfigOnEveryCommand) {
  for (const std::string c : {"train --data a --out b", "reconstruct --ckpt a --input b --out c",
                              "evaluate --recon a --data b"}) {
    auto r = run(c + " --dump-config");
    EXPECT_EQ(r.code, 0) << c;
    EXPECT_EQ(r.out.rfind("command=", 0), 0u) << c;
    std::istringstream in(r.out);
    std::string line;
    while (std::getline(in, line)) EXPECT_NE(line.find('='), std::string::npos) << line;
  }
  EXPECT_NE(run("reconstruct --ckpt a --input b --out c --dump-config").out.find("steps=5\n"), std::string::npos);
}
