#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <string>

#include "optithreat/harness.hpp"
#include "optithreat/imageio.hpp"
#include "support.hpp"

namespace fs = std::filesystem;

namespace {

// Exit status of the CLI with `args`, output discarded.
int run(const std::string& args, const std::string& env = {}) {
  const std::string cmd = env + (env.empty() ? "" : " ") + OPTITHREAT_CLI + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const std::string kFast = "--grid 128 --threads 1";

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run("sweep --help"), 0);
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run("sweep --count notanumber"), 1);
}

TEST(Cli, SweepRunsAndRefusesForeignResume) {
  const auto dir = oracle::temp_dir("cli_sweep");
  const auto out = (dir / "run").string();
  EXPECT_EQ(run("sweep --count 2 --seed 5 -o " + out + " " + kFast), 0);
  EXPECT_TRUE(fs::exists(dir / "run" / "optical.csv"));
  EXPECT_TRUE(fs::exists(dir / "run" / "run.json"));
  EXPECT_FALSE(fs::is_empty(dir / "run" / "plots"));
  EXPECT_EQ(run("sweep --count 2 --seed 6 -o " + out + " " + kFast), 1);
  EXPECT_EQ(run("plot " + out), 0);
  EXPECT_EQ(run("plot " + (dir / "nothing").string()), 2);
}

TEST(Cli, ConfigErrorsExitWithOne) {
  const auto dir = oracle::temp_dir("cli_config");
  EXPECT_EQ(run("sweep --range 3:0.5:0.1 -o " + (dir / "a").string() + " " + kFast), 1);
  EXPECT_EQ(run("sweep --range bogus -o " + (dir / "a").string()), 1);
  EXPECT_EQ(run("sweep --grid 100 -o " + (dir / "a").string()), 1);
  std::ofstream(dir / "bad.json") << R"({"count": 2, "surprise": true})";
  EXPECT_EQ(run("sweep -c " + (dir / "bad.json").string()), 1);
  EXPECT_EQ(run("shapley --merits sr,contrast -o " + (dir / "s").string()), 1);
  EXPECT_EQ(run("validate-edge --synthetic"), 1);
}

TEST(Cli, SampleFailuresExitWithThree) {
  // 24x24 images cannot hold the kernels of +-lambda aberrations
  const auto dir = oracle::temp_dir("cli_partial");
  fs::create_directories(dir / "data" / "images");
  optithreat::io::write_png((dir / "data" / "images" / "a.png").string(),
                            optithreat::Image(24, 24, 1, 0.5));
  EXPECT_EQ(run("sweep --count 2 --no-plots --dataset " + (dir / "data").string() + " -o " +
                (dir / "r").string() + " " + kFast),
            3);
  EXPECT_NE(oracle::read_file(dir / "r" / "failures.csv").find("does not fit"), std::string::npos);
}

TEST(Cli, MissingDataExitsWithTwo) {
  const auto dir = oracle::temp_dir("cli_data");
  EXPECT_EQ(run("sweep --count 1 --dataset /nonexistent -o " + (dir / "r").string() + " " + kFast), 2);
  EXPECT_EQ(run("eval --dataset /nonexistent --predictions /nonexistent"), 2);
}

TEST(Cli, PerturbAndEdgeValidation) {
  const auto dir = oracle::temp_dir("cli_perturb");
  std::ofstream(dir / "s.json") << R"({"wavelength_um": 0.55, "coefficients": {"4": 0.1}})";
  optithreat::Image img(96, 96, 1, 0.3);
  for (int r = 0; r < 96; ++r) {
    for (int c = 48; c < 96; ++c) img.at(r, c) = 0.7;
  }
  optithreat::io::write_png((dir / "in.png").string(), img);
  EXPECT_EQ(run("perturb --spectrum " + (dir / "s.json").string() + " -i " + (dir / "in.png").string() +
                " -o " + (dir / "out.npy").string() + " --psf-png " + (dir / "psf.png").string()),
            0);
  const auto out = optithreat::io::read_image((dir / "out.npy").string());
  EXPECT_EQ(out.width, 96);
  EXPECT_TRUE(fs::exists(dir / "psf.png"));
  EXPECT_EQ(run("perturb --spectrum " + (dir / "missing.json").string() + " -i " +
                (dir / "in.png").string() + " -o " + (dir / "x.png").string()),
            2);
  EXPECT_EQ(run("validate-edge --synthetic --spectrum " + (dir / "s.json").string() + " -o " +
                (dir / "edge").string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "edge" / "edge_mtf_horizontal.csv"));
  // a flat region has no edge to analyse
  EXPECT_EQ(run("validate-edge --image " + (dir / "in.png").string() + " --roi 0,0,30,90"), 2);
}

TEST(Cli, OutputRootFromEnvironment) {
  const auto root = oracle::temp_dir("cli_env");
  EXPECT_EQ(run("sweep --count 1 --no-plots -o rel/run " + kFast,
                std::string(optithreat::kOutputRootEnv) + "=" + root.string()),
            0);
  EXPECT_TRUE(fs::exists(root / "rel" / "run" / "optical.csv"));
}
