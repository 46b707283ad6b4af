#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gfm/io.hpp"

namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("gfm_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Runs the CLI inside the scratch directory; stdout and stderr go to files.
  int run(const std::string& args) {
    const std::string cmd = "cd '" + dir_.string() + "' && '" GFM_CLI_PATH "' " + args +
                            " > stdout.txt 2> stderr.txt";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string read(const std::string& name) const {
    std::ifstream in(dir_ / name, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  std::size_t lines(const std::string& name) const {
    const auto text = read(name);
    return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
  }

  fs::path path(const std::string& name) const { return dir_ / name; }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, TrainExampleRun) {
  EXPECT_EQ(run("train --d 64 --k 2 --n 8192 --T 30 --seed 7"), 0) << read("stderr.txt");
  EXPECT_EQ(lines("trace.csv"), 32u);  // header + 31 rows
  EXPECT_EQ(gfm::io::read_trace(path("trace.csv")).size(), 31u);
  const auto out = read("stdout.txt");
  EXPECT_NE(out.find("status converged"), std::string::npos) << out;
  EXPECT_NE(out.find("batches_consumed 31"), std::string::npos);
  EXPECT_NE(out.find("contraction_rate"), std::string::npos);
  const auto [model, meta] = gfm::io::load_checkpoint(path("model.gfm"));
  EXPECT_EQ(model.dim(), 64);
  EXPECT_EQ(meta.batches_consumed, 31);
  EXPECT_EQ(meta.config.seed, 7u);
}

TEST_F(CliTest, RankNotBelowDimensionIsUsageError) {
  EXPECT_EQ(run("train --d 4 --k 8 --n 100 --T 2 --seed 1"), 2);
  EXPECT_NE(read("stderr.txt").find("k"), std::string::npos);
  EXPECT_EQ(run("train --d 4 --k 4 --n 100 --T 2 --seed 1"), 2);
}

TEST_F(CliTest, SeedIsMandatory) {
  EXPECT_EQ(run("train --d 8 --k 2 --n 100 --T 2"), 2);
  EXPECT_EQ(run("verify --all"), 2);
  EXPECT_EQ(run("sweep --d 8 --k 2 --axis n --values 100 --T 2"), 2);
}

TEST_F(CliTest, BadFlagsAreUsageErrors) {
  EXPECT_EQ(run("train --d 8 --k 2 --n abc --T 2 --seed 1"), 2);
  EXPECT_EQ(run("train --d 8 --k 2 --n 100 --T 2 --seed 1 --spectrum 1,zero"), 2);
  EXPECT_EQ(run("train --d 8 --k 2 --n 100 --T 2 --seed 1 --spectrum 1,2,3"), 2);
  EXPECT_EQ(run("train --d 8 --k 2 --n 100 --T 2 --seed 1 --spectrum cond:2:weird"), 2);
  EXPECT_EQ(run("bogus"), 2);
  EXPECT_EQ(run(""), 2);
}

TEST_F(CliTest, RepeatedRunsAreByteIdentical) {
  const std::string flags = "--d 24 --k 2 --n 1000 --T 6 --seed 11 --noise 0.05";
  ASSERT_EQ(run("train " + flags + " --trace a.csv --checkpoint a.gfm"), 0);
  ASSERT_EQ(run("train " + flags + " --trace b.csv --checkpoint b.gfm"), 0);
  EXPECT_EQ(read("a.csv"), read("b.csv"));
  EXPECT_EQ(read("a.gfm"), read("b.gfm"));
  EXPECT_FALSE(read("a.gfm").empty());
}

TEST_F(CliTest, DifferentSeedsDiffer) {
  ASSERT_EQ(run("train --d 16 --k 2 --n 500 --T 3 --seed 1 --trace a.csv"), 0);
  ASSERT_EQ(run("train --d 16 --k 2 --n 500 --T 3 --seed 2 --trace b.csv"), 0);
  EXPECT_NE(read("a.csv"), read("b.csv"));
}

TEST_F(CliTest, TinyBatchDivergesWithExitOne) {
  EXPECT_EQ(run("train --d 64 --k 2 --n 2 --T 20 --seed 5"), 1);
  EXPECT_NE(read("stdout.txt").find("status diverged"), std::string::npos) << read("stdout.txt");
}

TEST_F(CliTest, ConfigFileWithOverrides) {
  gfm::SolverConfig cfg;
  cfg.d = 16;
  cfg.k = 2;
  cfg.n = 400;
  cfg.t_max = 2;
  gfm::io::save_config(cfg, path("cfg.json"));
  ASSERT_EQ(run("train --config cfg.json --T 4 --seed 3"), 0) << read("stderr.txt");
  EXPECT_EQ(gfm::io::read_trace(path("trace.csv")).size(), 5u);
  std::ofstream(path("bad.json")) << R"({"d": 16, "rank": 2})";
  EXPECT_EQ(run("train --config bad.json --seed 3"), 1);
}

TEST_F(CliTest, EvalScoresCheckpoint) {
  ASSERT_EQ(run("train --d 32 --k 2 --n 4096 --T 20 --seed 4 --spectrum 1,-0.5"), 0);
  ASSERT_EQ(run("eval --checkpoint model.gfm --spectrum 1,-0.5 --out eval.json"), 0)
      << read("stderr.txt");
  const auto j = gfm::io::read_json(path("eval.json"));
  EXPECT_LT(j["epsilon"].get<double>(), 1e-6);
  EXPECT_LT(j["test_mse"].get<double>(), 1e-10);
  EXPECT_EQ(j["batches_consumed"], 21);
  EXPECT_EQ(run("eval --checkpoint missing.gfm"), 1);
}

TEST_F(CliTest, GenWritesTruthAndBatch) {
  ASSERT_EQ(run("gen --d 6 --k 1 --seed 2 --spectrum 2 --w-norm 0 --dump-batch b.csv --n 5"), 0);
  const auto j = gfm::io::read_json(path("truth.json"));
  EXPECT_EQ(j["lambda_star"][0].get<double>(), 2.0);
  EXPECT_EQ(j["w_star"].size(), 6u);
  EXPECT_EQ(lines("b.csv"), 6u);
  EXPECT_EQ(read("b.csv").rfind("y,x0,x1", 0), 0u);
  EXPECT_EQ(run("gen --d 6 --k 1 --seed 2 --dump-batch b.csv"), 2);
}

TEST_F(CliTest, VerifyAllWritesSixReports) {
  const int code = run("verify --all --d 24 --k 2 --seed 3 --out-dir reports");
  ASSERT_TRUE(code == 0 || code == 1) << read("stderr.txt");
  bool all_pass = true;
  int count = 0;
  for (const char* name : {"trace_conc", "first_order_mean", "adjoint_cross", "cross_term",
                           "covariance", "shifted_rip"}) {
    const auto j = gfm::io::read_json(path("reports") / (std::string(name) + ".json"));
    EXPECT_EQ(j["lemma"], name);
    all_pass = all_pass && j["pass"].get<bool>();
    ++count;
  }
  EXPECT_EQ(count, 6);
  EXPECT_EQ(code == 0, all_pass);  // exit 0 iff every exponent is in tolerance
}

TEST_F(CliTest, VerifySmallNReportsFit) {
  const int code = run("verify --lemma covariance --n 64 --d 24 --seed 1");
  EXPECT_TRUE(code == 0 || code == 1);
  const auto j = gfm::io::read_json(path("covariance.json"));
  EXPECT_EQ(code == 0, j["pass"].get<bool>());
}

TEST_F(CliTest, VerifyErrors) {
  EXPECT_EQ(run("verify --lemma nonsense --seed 1"), 2);
  EXPECT_EQ(run("verify --lemma covariance --d 4096 --seed 1"), 2);
  EXPECT_NE(read("stderr.txt").find("cap"), std::string::npos);
  EXPECT_EQ(run("verify --seed 1"), 2);
}

TEST_F(CliTest, SingleValueSweep) {
  ASSERT_EQ(run("sweep --d 16 --k 2 --axis n --values 2000 --T 8 --seed 1 --seeds 2"), 0)
      << read("stderr.txt");
  EXPECT_EQ(lines("sweep.csv"), 2u);
  EXPECT_EQ(read("sweep.csv").rfind("axis,value,plateau_epsilon,fitted_rate,diverged,seeds\n", 0),
            0u);
}

TEST_F(CliTest, NoiseSweepIsMonotone) {
  ASSERT_EQ(run("sweep --d 16 --k 2 --n 2000 --axis xi --values 0,0.1,0.2 --T 15 --seed 1 "
                "--seeds 3 --out xi.csv"),
            0);
  std::istringstream in(read("xi.csv"));
  std::string line;
  std::getline(in, line);
  std::vector<double> plateau;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    ASSERT_EQ(f.size(), 6u);
    plateau.push_back(std::stod(f[2]));
  }
  ASSERT_EQ(plateau.size(), 3u);
  EXPECT_LT(plateau[0], plateau[1]);
  EXPECT_LT(plateau[1], plateau[2]);
}

TEST_F(CliTest, SweepErrors) {
  EXPECT_EQ(run("sweep --d 16 --k 2 --axis n --values , --T 2 --seed 1"), 2);
  EXPECT_EQ(run("sweep --d 16 --k 2 --axis depth --values 1 --T 2 --seed 1"), 2);
  EXPECT_EQ(run("sweep --d 16 --k 2 --axis n --values 0.5 --T 2 --seed 1"), 2);
}

TEST_F(CliTest, HelpExitsZero) {
  EXPECT_EQ(run("--help"), 0);
  EXPECT_NE(read("stdout.txt").find("train"), std::string::npos);
}
