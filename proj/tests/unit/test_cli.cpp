// Drives the cosdpo binary end to end in a scratch directory.
#include <gtest/gtest.h>
#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "experiment.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(COSDPO_CLI_PATH) + " " + args + " 2>/dev/null";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) r.out += buf.data();
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t line_count(const std::string& s) { return std::count(s.begin(), s.end(), '\n'); }

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / ("cosdpo_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    data_ = (dir_ / "data.bin").string();
    ASSERT_EQ(run("synth --groups 30 --group-size 5 --dim 6 --objectives 2 --seed 1 --output " + data_).code, 0);
    base_run_ = train_args("weight-cos", "wcos");
    ASSERT_EQ(run(base_run_).code, 0);
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static std::string train_args(const std::string& method, const std::string& out,
                                const std::string& extra = "") {
    return "train --method " + method + " --dataset " + data_ +
           " --seed 3 --steps 40 --pretrain-steps 30 --pretrain-base --grid 3 --output " +
           (dir_ / out).string() + " " + extra;
  }

  static inline fs::path dir_;
  static inline std::string data_;
  static inline std::string base_run_;
};

}  // namespace

TEST_F(Cli, HelpListsDefaults) {
  const auto r = run("train --help");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("--steps"), std::string::npos);
  EXPECT_NE(r.out.find("--threads"), std::string::npos);
  EXPECT_NE(run("front --help").out.find("test"), std::string::npos);
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("train --bogus-flag").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("train --method weight-cos --dataset " + data_ + " --pretrain-base").code, 2)
      << "missing seed";
  EXPECT_EQ(run("train --method nope --dataset " + data_ + " --seed 1 --pretrain-base").code, 2);
  EXPECT_EQ(run("train --method weight-cos --dataset " + data_ + " --seed 1").code, 2)
      << "no base";
}

TEST_F(Cli, WeightCosWritesOneConditionedCheckpoint) {
  const fs::path run_dir = dir_ / "wcos";
  EXPECT_TRUE(fs::exists(run_dir / "model.ckpt"));
  EXPECT_TRUE(fs::exists(run_dir / "base.ckpt"));
  EXPECT_FALSE(fs::exists(run_dir / "grid_00.ckpt"));
  std::istringstream log(slurp(run_dir / "metrics.jsonl"));
  std::size_t pretrain = 0, finetune = 0;
  for (std::string line; std::getline(log, line);) {
    const auto j = nlohmann::json::parse(line);
    (j.value("model", "") == "base" ? pretrain : finetune) += 1;
  }
  EXPECT_EQ(pretrain, 30u);
  EXPECT_EQ(finetune, 40u);
  const auto manifest = nlohmann::json::parse(slurp(run_dir / "manifest.json"));
  EXPECT_EQ(manifest.at("method"), "weight-cos");
  EXPECT_TRUE(fs::exists(run_dir / "run_meta.json"));
}

TEST_F(Cli, RerunIsHashIdentical) {
  const char* files[] = {"base.ckpt", "model.ckpt", "metrics.jsonl", "config.json", "manifest.json"};
  std::vector<std::uint64_t> first;
  for (const char* f : files) first.push_back(cosdpo::experiment::fnv1a(slurp(dir_ / "wcos" / f)));
  ASSERT_EQ(run(base_run_).code, 0);
  for (std::size_t i = 0; i < std::size(files); ++i)
    EXPECT_EQ(cosdpo::experiment::fnv1a(slurp(dir_ / "wcos" / files[i])), first[i]) << files[i];
}

TEST_F(Cli, SoupWritesUnitCheckpoints) {
  ASSERT_EQ(run(train_args("dpo-soup", "soup")).code, 0);
  EXPECT_TRUE(fs::exists(dir_ / "soup" / "unit_01.ckpt"));
  EXPECT_TRUE(fs::exists(dir_ / "soup" / "unit_02.ckpt"));
  EXPECT_FALSE(fs::exists(dir_ / "soup" / "unit_03.ckpt"));
  ASSERT_EQ(run("front --run " + (dir_ / "soup").string()).code, 0);
  EXPECT_EQ(line_count(slurp(dir_ / "soup" / "front.csv")), 4u);
}

TEST_F(Cli, FrontRowsAndScaleControl) {
  const std::string r = (dir_ / "wcos").string();
  ASSERT_EQ(run("front --run " + r + " --grid 11").code, 0);
  const std::string plain = slurp(dir_ / "wcos" / "front.csv");
  EXPECT_EQ(line_count(plain), 12u);
  ASSERT_EQ(run("front --run " + r + " --grid 11 --scale 1.0 --output " + (dir_ / "scaled1").string()).code, 0);
  EXPECT_EQ(slurp(dir_ / "scaled1.csv"), plain);
  EXPECT_TRUE(fs::exists(dir_ / "scaled1.json"));
  EXPECT_EQ(run("front --run " + r + " --beta 1,1").code, 2);
  EXPECT_EQ(run("front --run " + (dir_ / "missing").string()).code, 2);
}

TEST_F(Cli, HugeScaleMatchesBaseMainMetric) {
  const std::string r = (dir_ / "wcos").string();
  ASSERT_EQ(run("front --run " + r + " --grid 3 --scale 1e9 --output " + (dir_ / "far").string()).code, 0);
  const auto front = nlohmann::json::parse(slurp(dir_ / "far.json")).at("points");
  ASSERT_EQ(front.size(), 3u);
  for (const auto& p : front) EXPECT_EQ(p.at("main_metric"), front[0].at("main_metric"));
}

TEST_F(Cli, HypervolumeExamples) {
  const fs::path f = dir_ / "hv.csv";
  std::ofstream(f) << "w_1,w_2,scale,aux_1,aux_2,main\n0.5,0.5,1,1,1,0.3\n";
  auto r = run("hv --front " + f.string() + " --reference 0,0");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(std::stod(r.out.substr(0, r.out.find('\n'))), 1.0);
  std::ofstream(f, std::ios::app) << "0.2,0.8,1,0.5,0.5,0.3\n";
  r = run("hv --front " + f.string());
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(std::stod(r.out.substr(0, r.out.find('\n'))), 1.0);
  const auto j = nlohmann::json::parse(r.out.substr(r.out.find('\n') + 1));
  EXPECT_EQ(j.at("hypervolume"), 1.0);
  EXPECT_EQ(run("hv --front " + f.string() + " --reference 0,0,0").code, 2);
}

TEST_F(Cli, ControlReportsBaseAndScaledScores) {
  const auto r = run("control --run " + (dir_ / "wcos").string() + " --w 0.5,0.5 --scale 1e9");
  ASSERT_EQ(r.code, 0);
  const auto j = nlohmann::json::parse(r.out);
  const auto& base = j.at("base_scores");
  const auto& ctl = j.at("controlled_scores");
  ASSERT_EQ(base.size(), ctl.size());
  for (std::size_t i = 0; i < base.size(); ++i)
    EXPECT_NEAR(ctl[i].get<double>(), base[i].get<double>(), 1e-6);
}

TEST_F(Cli, OutputRootEnvironment) {
  const fs::path root = dir_ / "root";
  fs::create_directories(root);
  const std::string cmd = "env COSDPO_OUTPUT_ROOT=" + root.string() + " " + COSDPO_CLI_PATH +
                          " synth --groups 5 --group-size 3 --dim 4 --objectives 2 --seed 1 --output rel.bin"
                          " >/dev/null 2>&1";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_TRUE(fs::exists(root / "rel.bin"));
}
