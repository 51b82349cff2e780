#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("scalemm_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Runs the CLI with stdout captured in `out` and stderr in `err`.
  int run(const std::string& args, const std::string& out = "stdout.txt") {
    const std::string cmd = std::string(SCALEMM_CLI_PATH) + " " + args + " > " +
                            (dir_ / out).string() + " 2> " + (dir_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string stdout_text(const std::string& out = "stdout.txt") { return slurp(dir_ / out); }
  std::string stderr_text() { return slurp(dir_ / "stderr.txt"); }

  fs::path grid(const std::string& name = "grid", const std::string& extra = "") {
    const fs::path p = dir_ / name;
    EXPECT_EQ(run("simulate --mode grid --seed 3 --grid-points 300 --supplementary 6 --output " +
                  p.string() + " " + extra),
              0)
        << stderr_text();
    return p;
  }

  fs::path dir_;
};

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run("estimate"), 1);
  EXPECT_EQ(run("estimate x --algorithm 3"), 1);
  EXPECT_EQ(run("--help"), 0);
}

TEST_F(Cli, MissingDatasetIsAnInputError) {
  EXPECT_EQ(run("estimate " + (dir_ / "nope").string()), 3);
  EXPECT_FALSE(stderr_text().empty());
}

TEST_F(Cli, CorruptedManifestWritesNoOutput) {
  const fs::path g = grid();
  std::ofstream(g / "dataset.json") << "{ \"format\": ";
  const fs::path out = dir_ / "est.json";
  EXPECT_EQ(run("estimate " + g.string() + " --output " + out.string()), 3);
  EXPECT_FALSE(fs::exists(out));
}

TEST_F(Cli, DanglingPairNamesThePair) {
  const fs::path g = grid();
  std::ofstream(g / "correspondences.csv", std::ios::app) << "1,99,1,2,3,4\n";
  EXPECT_EQ(run("estimate " + g.string()), 3);
  EXPECT_NE(stderr_text().find("(1,99)"), std::string::npos) << stderr_text();
}

TEST_F(Cli, EstimateOnExportedSceneGivesUnitScale) {
  const fs::path ds = dir_ / "scene";
  ASSERT_EQ(run("simulate --mode sweep --trials 0 --n-points 200 --n-cameras 10 --sigma-n 0 --d 0.5 "
                "--export-dataset " + ds.string()),
            0)
      << stderr_text();
  ASSERT_EQ(run("estimate " + ds.string() + " --algorithm both"), 0) << stderr_text();
  const json j = json::parse(stdout_text());
  ASSERT_EQ(j["estimates"].size(), 2u);
  EXPECT_EQ(j["estimates"][0]["algorithm"], "1");
  EXPECT_EQ(j["estimates"][1]["algorithm"], "2");
  for (const auto& e : j["estimates"]) EXPECT_NEAR(e["s"].get<double>(), 1.0, 1e-8);
}

TEST_F(Cli, EstimateOnGridMatchesSfmScale) {
  const fs::path g = grid("g", "--pixel-noise 0");
  ASSERT_EQ(run("estimate " + g.string() + " --algorithm 2"), 0) << stderr_text();
  const json j = json::parse(stdout_text());
  EXPECT_NEAR(j["estimates"][0]["s"].get<double>(), 0.37, 1e-8);
  EXPECT_EQ(j["estimates"][0]["distance_convention"], "L/s");
}

TEST_F(Cli, BaRequiresInitialScaleWithoutClosedForm) {
  const fs::path g = grid();
  EXPECT_EQ(run("ba " + g.string() + " --no-closed-form"), 1);
  ASSERT_EQ(run("ba " + g.string() + " --no-closed-form --initial-scale 2.0 --algorithm 1"), 0)
      << stderr_text();
  const json j = json::parse(stdout_text());
  EXPECT_TRUE(j.dump().find("s_after") != std::string::npos);
}

TEST_F(Cli, EvalWithoutGroundTruthExitsFive) {
  const fs::path ds = dir_ / "scene";
  ASSERT_EQ(run("simulate --trials 0 --n-points 100 --n-cameras 6 --d 1 --export-dataset " + ds.string()), 0)
      << stderr_text();
  EXPECT_EQ(run("eval " + ds.string()), 5);
}

TEST_F(Cli, EvalReportsBothStages) {
  const fs::path g = grid();
  const fs::path pairs = dir_ / "pairs.csv";
  ASSERT_EQ(run("eval " + g.string() + " --algorithm 1 --pairs-csv " + pairs.string()), 0) << stderr_text();
  const json j = json::parse(stdout_text());
  const std::string text = j.dump();
  EXPECT_NE(text.find("before_BA"), std::string::npos);
  EXPECT_NE(text.find("after_BA"), std::string::npos);
  EXPECT_TRUE(fs::exists(pairs));
}

TEST_F(Cli, SweepWritesCsvFiles) {
  const fs::path out = dir_ / "sweep";
  ASSERT_EQ(run("simulate --trials 2 --n-points 100 --n-cameras 8 --d 0.1 --d 10 --output " + out.string()),
            0)
      << stderr_text();
  const std::string summary = slurp(out / "summary.csv");
  EXPECT_EQ(summary.rfind("algorithm,d,mean,sd,failures\n", 0), 0u);
  EXPECT_EQ(slurp(out / "trials.csv").rfind("algorithm,d,sigma_n,trial,value\n", 0), 0u);
}

TEST_F(Cli, OutputsAreByteIdenticalAcrossRuns) {
  const fs::path g1 = grid("g1");
  const fs::path g2 = grid("g2");
  for (const char* f : {"dataset.json", "poses.csv", "rig.csv", "correspondences.csv", "grid.csv"}) {
    EXPECT_EQ(slurp(g1 / f), slurp(g2 / f)) << f;
  }
  const std::string sweep = "simulate --trials 3 --n-points 100 --n-cameras 8 --d 1 --seed 5";
  ASSERT_EQ(run(sweep, "a.txt"), 0);
  ASSERT_EQ(run(sweep + " --threads 1", "b.txt"), 0);
  EXPECT_EQ(stdout_text("a.txt"), stdout_text("b.txt"));
  ASSERT_EQ(run("estimate " + g1.string() + " --algorithm both --sample-fraction 0.5", "c.txt"), 0);
  ASSERT_EQ(run("estimate " + g1.string() + " --algorithm both --sample-fraction 0.5", "d.txt"), 0);
  EXPECT_EQ(stdout_text("c.txt"), stdout_text("d.txt"));
}

}  // namespace
