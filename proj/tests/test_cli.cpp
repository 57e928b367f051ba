#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "dpe/dpe.hpp"

namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("dpe_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  int run(const std::string& args) const {
    const std::string cmd = std::string(DPE_CLI_PATH) + " " + args + " > " + path("stdout.txt") + " 2> " +
                            path("stderr.txt");
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string slurp(const std::string& name) const {
    std::ifstream in(path(name));
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  void write(const std::string& name, const std::string& text) const {
    std::ofstream out(path(name));
    out << text;
  }

  // Blurred 24x24 scene plus its kernel.
  void deconv_fixture() const {
    dpe::TaskSpec spec;
    spec.noise = 0.01;
    const auto inst = dpe::synthesize(dpe::TaskKind::deconv, dpe::synthetic_scene(24, 24, 1, 7), spec, 42);
    dpe::write_image(inst.observation, path("b.pgm"));
    dpe::write_image(*inst.truth, path("truth.pgm"));
    dpe::save_kernel(dpe::gaussian_kernel(1.5), path("k.txt"));
  }

  fs::path dir_;
};

std::size_t count_lines(const std::string& text) {
  std::size_t n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

}  // namespace

TEST_F(CliTest, DeconvWritesImageTraceAndReport) {
  deconv_fixture();
  ASSERT_EQ(run("deconv --input " + path("b.pgm") + " --kernel " + path("k.txt") + " --output " + path("o.pgm") +
                " --truth " + path("truth.pgm") + " --k-max 6"),
            0)
      << slurp("stderr.txt");
  ASSERT_TRUE(fs::exists(path("o.pgm")));
  const dpe::ImagePlane out = dpe::read_image(path("o.pgm"));
  EXPECT_EQ(out.width(), 24u);
  const std::string report = slurp("o.pgm.report.txt");
  EXPECT_NE(report.find("sufficient_descent = pass"), std::string::npos);
  const std::size_t stages = std::stoul(report.substr(report.find("stages = ") + 9));
  EXPECT_GE(stages, 1u);
  EXPECT_LE(stages, 6u);
  const std::string trace = slurp("o.pgm.trace.csv");
  EXPECT_EQ(trace.substr(0, trace.find('\n')), dpe::kTraceHeader);
  EXPECT_EQ(count_lines(trace), stages + 1);
}

TEST_F(CliTest, ExplicitTracePath) {
  deconv_fixture();
  ASSERT_EQ(run("deconv --input " + path("b.pgm") + " --kernel " + path("k.txt") + " --output " + path("o.pgm") +
                " --trace " + path("t.csv") + " --k-max 3 --strict"),
            0);
  EXPECT_TRUE(fs::exists(path("t.csv")));
  EXPECT_FALSE(fs::exists(path("o.pgm.trace.csv")));
}

TEST_F(CliTest, UnknownSubcommandPrintsUsage) {
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_NE(slurp("stderr.txt").find("deconv"), std::string::npos);
}

TEST_F(CliTest, MissingSubcommandIsConfigError) { EXPECT_EQ(run(""), 1); }

TEST_F(CliTest, SelftestPasses) {
  EXPECT_EQ(run("selftest"), 0) << slurp("stdout.txt");
  EXPECT_EQ(slurp("stdout.txt").find("FAIL"), std::string::npos);
}

TEST_F(CliTest, BadConfigValueExitsOne) {
  deconv_fixture();
  EXPECT_EQ(run("deconv --input " + path("b.pgm") + " --kernel " + path("k.txt") + " --output " + path("o.pgm") +
                " --c-ratio 0.7"),
            1);
  EXPECT_NE(slurp("stderr.txt").find("c_ratio"), std::string::npos);
}

TEST_F(CliTest, ConfigFileIsRead) {
  deconv_fixture();
  write("run.cfg", "# test\nkernel = " + path("k.txt") + "\nk_max = 2\nbogus = 1\n");
  EXPECT_EQ(run("deconv --config " + path("run.cfg") + " --input " + path("b.pgm") + " --output " + path("o.pgm")),
            1);
  EXPECT_NE(slurp("stderr.txt").find("bogus"), std::string::npos);
  write("run.cfg", "kernel = " + path("k.txt") + "\nk_max = 2\n");
  EXPECT_EQ(run("deconv --config " + path("run.cfg") + " --input " + path("b.pgm") + " --output " + path("o.pgm")),
            0);
  EXPECT_EQ(count_lines(slurp("o.pgm.trace.csv")), 3u);
}

TEST_F(CliTest, MissingInputPathIsConfigError) {
  EXPECT_EQ(run("deconv --input " + path("absent.pgm") + " --kernel x --output " + path("o.pgm")), 1);
}

TEST_F(CliTest, CorruptImageExitsTwo) {
  deconv_fixture();
  write("bad.pgm", "P5\n4 4\n255\nxx");
  EXPECT_EQ(run("deconv --input " + path("bad.pgm") + " --kernel " + path("k.txt") + " --output " + path("o.pgm")),
            2);
  write("bad.txt", "2 2\n1 1\n1 1\n");
  EXPECT_EQ(run("deconv --input " + path("b.pgm") + " --kernel " + path("bad.txt") + " --output " + path("o.pgm")),
            2);
}

TEST_F(CliTest, UnwritableOutputExitsTwo) {
  deconv_fixture();
  EXPECT_EQ(run("deconv --input " + path("b.pgm") + " --kernel " + path("k.txt") + " --output " +
                path("no/such/dir/o.pgm") + " --k-max 1"),
            2);
}

TEST_F(CliTest, InpaintAndSuperResolution) {
  const dpe::ImagePlane truth = dpe::synthetic_scene(16, 16, 1, 3);
  const dpe::ImagePlane mask = dpe::random_mask(16, 16, 1, 0.5, 9);
  dpe::write_image(dpe::DegradationOperator::mask(mask).apply(truth), path("holes.pgm"));
  dpe::write_image(mask, path("mask.pgm"), 8);
  ASSERT_EQ(run("inpaint --input " + path("holes.pgm") + " --mask " + path("mask.pgm") + " --output " +
                path("i.pgm") + " --k-max 3"),
            0)
      << slurp("stderr.txt");

  dpe::TaskSpec spec;
  const auto inst = dpe::synthesize(dpe::TaskKind::sr, truth, spec, 1);
  dpe::write_image(inst.observation, path("small.pgm"));
  ASSERT_EQ(run("sr --input " + path("small.pgm") + " --scale 2 --output " + path("big.pgm") + " --k-max 3"), 0)
      << slurp("stderr.txt");
  const dpe::ImagePlane big = dpe::read_image(path("big.pgm"));
  EXPECT_EQ(big.width(), 16u);
  EXPECT_EQ(big.height(), 16u);
}

TEST_F(CliTest, DehazeWritesTransmission) {
  const auto inst = dpe::synthesize(dpe::TaskKind::dehaze, dpe::synthetic_scene(16, 16, 3, 5), {}, 2);
  dpe::write_image(inst.observation, path("hazy.ppm"));
  ASSERT_EQ(run("dehaze --input " + path("hazy.ppm") + " --output " + path("clear.ppm") + " --k-max 2"), 0)
      << slurp("stderr.txt");
  EXPECT_EQ(dpe::read_image(path("clear.ppm")).channels(), 3u);
  EXPECT_EQ(dpe::read_image(path("clear.ppm.transmission.pgm")).channels(), 1u);
}

TEST_F(CliTest, BenchWritesCsvInManifestOrder) {
  dpe::write_image(dpe::synthetic_scene(16, 16, 1, 1), path("a.pgm"));
  dpe::write_image(dpe::synthetic_scene(16, 16, 1, 2), path("b.pgm"));
  write("runs.txt", "# kind path spec seed\n"
                    "deconv " + path("a.pgm") + " blur=1.0,noise=0.01 3\n"
                    "inpaint " + path("b.pgm") + " missing=0.3 4\n"
                    "sr " + path("a.pgm") + " scale=2 5\n");
  ASSERT_EQ(run("bench --manifest " + path("runs.txt") + " --output " + path("r.csv") + " --k-max 2 --jobs 2"), 0)
      << slurp("stderr.txt");
  std::istringstream csv(slurp("r.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "id,psnr_in,psnr_out,ssim_out,l1_out,stages,seconds");
  std::vector<std::string> ids;
  while (std::getline(csv, line)) ids.push_back(line.substr(0, line.find(',')));
  ASSERT_EQ(ids.size(), 3u);
  EXPECT_EQ(ids[0], "a-deconv-3");
  EXPECT_EQ(ids[1], "b-inpaint-4");
  EXPECT_EQ(ids[2], "a-sr-5");
}

TEST_F(CliTest, BenchRejectsMalformedManifest) {
  write("runs.txt", "deconv only-two\n");
  EXPECT_EQ(run("bench --manifest " + path("runs.txt")), 1);
}
