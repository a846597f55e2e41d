#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "lit/checkpoint.hpp"
#include "lit/cli.hpp"
#include "lit/config_json.hpp"
#include "lit/model.hpp"
#include "lit/training_log.hpp"

using namespace lit;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("lit_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }
  std::string dir(const std::string& name) const { return (root_ / name).string(); }

  fs::path root_;
};

}  // namespace

TEST(Thousands, Formatting) {
  EXPECT_EQ(with_thousands(0), "0");
  EXPECT_EQ(with_thousands(999), "999");
  EXPECT_EQ(with_thousands(1000), "1,000");
  EXPECT_EQ(with_thousands(210173952), "210,173,952");
  EXPECT_EQ(with_thousands(-1234567), "-1,234,567");
}

TEST(Cli, GmacsPrintsReferenceValues) {
  const Result r = run({"gmacs", "--tokens", "256", "--dim", "384", "--heads", "2", "--kernel", "5"});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_NE(r.out.find("210,173,952"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("201,326,592"), std::string::npos) << r.out;
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(run({"gmacs", "--tokens", "abc"}).code, kExitUsage);
  EXPECT_EQ(run({"gmacs", "--heads", "7"}).code, kExitUsage);
  EXPECT_EQ(run({"sample", "--checkpoint", "/nonexistent.ckpt", "--out", "/tmp/x"}).code, kExitUsage);
  EXPECT_EQ(run({"gradcheck", "--precision", "f32"}).code, kExitUsage);
  EXPECT_EQ(run({"gradcheck", "--precision", "f16"}).code, kExitUsage);
}

TEST(Cli, HelpDocumentsEveryFlag) {
  for (const char* cmd : {"train-teacher", "convert", "train-student", "sample", "bench",
                          "sweep-heads", "gmacs", "gradcheck", "head-similarity"}) {
    const Result r = run({cmd, "--help"});
    EXPECT_EQ(r.code, kExitOk) << cmd;
    EXPECT_NE(r.out.find("OPTIONS"), std::string::npos) << cmd;
  }
  const Result r = run({"train-student", "--help"});
  for (const char* flag : {"--teacher", "--lambda1", "--lambda2", "--steps", "--seed-init",
                           "--seed-data", "--seed-noise", "--out", "--lambda-grid"}) {
    EXPECT_NE(r.out.find(flag), std::string::npos) << flag;
  }
}

TEST(Cli, GradcheckSingleOps) {
  const Result r = run({"gradcheck", "--skip-model"});
  EXPECT_EQ(r.code, kExitOk) << r.out << r.err;
  EXPECT_NE(r.out.find("failed 0"), std::string::npos);
}

TEST_F(CliTest, TeacherZeroStepsEqualsInit) {
  ASSERT_EQ(run({"train-teacher", "--steps", "0", "--out", dir("t0")}).code, kExitOk);
  const Checkpoint ck = load_checkpoint(dir("t0") + "/teacher.ckpt");
  EXPECT_TRUE(bitwise_equal(ck.params, init_model<float>(ck.config, 0)));
  EXPECT_TRUE(fs::exists(dir("t0") + "/run_config.json"));
}

TEST_F(CliTest, TeacherRunsAreReproducible) {
  const std::vector<std::string> base{"train-teacher", "--steps", "4", "--checkpoint-every", "2"};
  auto a = base, b = base;
  a.insert(a.end(), {"--out", dir("a")});
  b.insert(b.end(), {"--out", dir("b")});
  ASSERT_EQ(run(a).code, kExitOk);
  ASSERT_EQ(run(b).code, kExitOk);
  EXPECT_EQ(slurp(dir("a") + "/teacher.ckpt"), slurp(dir("b") + "/teacher.ckpt"));
  EXPECT_TRUE(fs::exists(dir("a") + "/teacher_step2.ckpt"));
  EXPECT_EQ(read_training_log(dir("a") + "/train_log.csv").size(), 4u);
}

TEST_F(CliTest, TeacherRejectsLinearConfig) {
  EXPECT_EQ(run({"train-teacher", "--config", "lit-micro", "--out", dir("t")}).code, kExitUsage);
}

TEST_F(CliTest, ConvertTrainSampleFlow) {
  ASSERT_EQ(run({"train-teacher", "--steps", "2", "--out", dir("t")}).code, kExitOk);
  const std::string teacher = dir("t") + "/teacher.ckpt";

  ASSERT_EQ(run({"convert", "--teacher", teacher, "--out", dir("c1")}).code, kExitOk);
  ASSERT_EQ(run({"convert", "--teacher", teacher, "--out", dir("c2")}).code, kExitOk);
  EXPECT_EQ(slurp(dir("c1") + "/student.ckpt"), slurp(dir("c2") + "/student.ckpt"));
  const Json report = read_json_file(dir("c1") + "/conversion_report.json");
  std::set<std::string> fresh;
  for (const auto& p : report["fresh"]) {
    const auto unit = p.get<std::string>();
    fresh.insert(unit.substr(0, unit.find('[')));
  }
  const Checkpoint student = load_checkpoint(dir("c1") + "/student.ckpt");
  for (const auto& [path, t] : student.params) {
    if (is_attention_path(path)) {
      EXPECT_TRUE(fresh.count(path)) << path;
    }
  }

  // Q, K, V row: only the output projection and DWC stay fresh.
  ASSERT_EQ(run({"convert", "--teacher", teacher, "--attention-subset", "QKV", "--out", dir("c3")}).code,
            kExitOk);
  const Json qkv = read_json_file(dir("c3") + "/conversion_report.json");
  for (const auto& p : qkv["fresh"]) {
    const auto s = p.get<std::string>();
    EXPECT_TRUE(s.find("attn.proj") != std::string::npos || s.find("attn.dwc") != std::string::npos) << s;
  }

  const std::string init = dir("c1") + "/student.ckpt";
  ASSERT_EQ(run({"train-student", "--init", init, "--lambda1", "0", "--lambda2", "0", "--steps", "3",
                 "--eval-count", "8", "--out", dir("s0")})
                .code,
            kExitOk);
  ASSERT_EQ(run({"train-student", "--init", init, "--teacher", teacher, "--lambda1", "0", "--lambda2",
                 "0", "--steps", "3", "--eval-count", "8", "--out", dir("s1")})
                .code,
            kExitOk);
  const auto l0 = read_training_log(dir("s0") + "/train_log.csv");
  const auto l1 = read_training_log(dir("s1") + "/train_log.csv");
  ASSERT_EQ(l0.size(), 3u);
  for (std::size_t i = 0; i < l0.size(); ++i) EXPECT_EQ(l0[i].total, l1[i].total);
  EXPECT_EQ(load_checkpoint(dir("s0") + "/student.ckpt").params.size(), student.params.size());

  EXPECT_EQ(run({"train-student", "--init", init, "--lambda1", "0.5", "--out", dir("s2")}).code,
            kExitUsage);

  const std::string ck = dir("s1") + "/student.ckpt";
  ASSERT_EQ(run({"sample", "--checkpoint", ck, "--n", "4", "--steps", "5", "--seed", "3", "--out",
                 dir("p1")})
                .code,
            kExitOk);
  ASSERT_EQ(run({"sample", "--checkpoint", ck, "--n", "4", "--steps", "5", "--seed", "3", "--out",
                 dir("p2")})
                .code,
            kExitOk);
  EXPECT_EQ(slurp(dir("p1") + "/samples.pgm"), slurp(dir("p2") + "/samples.pgm"));
  EXPECT_EQ(run({"sample", "--checkpoint", ck, "--n", "2", "--steps", "3", "--cfg-scale", "4",
                 "--labels", "1,3", "--out", dir("p3")})
                .code,
            kExitOk);

  const Result sim = run({"head-similarity", "--checkpoint", teacher, "--batch", "2"});
  EXPECT_EQ(sim.code, kExitOk) << sim.err;
  EXPECT_NE(sim.out.find("overall mean_cosine"), std::string::npos);
}

TEST_F(CliTest, TeacherStudentShapeMismatch) {
  ASSERT_EQ(run({"train-teacher", "--steps", "0", "--out", dir("t")}).code, kExitOk);
  const std::string path = dir("other.json");
  std::ofstream(path) << R"({"preset": "lit-micro", "num_classes": 6})";
  const Result r = run({"train-student", "--config", path, "--teacher", dir("t") + "/teacher.ckpt",
                        "--steps", "1", "--out", dir("s")});
  EXPECT_EQ(r.code, kExitUsage) << r.err;
  EXPECT_FALSE(fs::exists(dir("s") + "/student.ckpt"));
}

TEST_F(CliTest, LambdaGridEmitsOneRowPerCell) {
  ASSERT_EQ(run({"train-teacher", "--steps", "1", "--out", dir("t")}).code, kExitOk);
  const Result r = run({"train-student", "--teacher", dir("t") + "/teacher.ckpt", "--lambda-grid",
                        "--steps", "1", "--eval-count", "4", "--out", dir("grid")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  std::ifstream in(dir("grid") + "/summary.csv");
  int lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  EXPECT_EQ(lines, 10);
}

TEST_F(CliTest, BenchAndSweepWriteCsv) {
  ASSERT_EQ(run({"bench", "--tokens", "16", "--dim", "32", "--trials", "2", "--warmup", "0", "--out",
                 dir("b")})
                .code,
            kExitOk);
  EXPECT_TRUE(fs::exists(dir("b") + "/bench.csv"));
  const Result r = run({"sweep-heads", "--tokens", "16", "--dim", "48", "--heads-list", "1,2,3",
                        "--trials", "1", "--warmup", "0", "--out", dir("s")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  std::ifstream in(dir("s") + "/sweep_heads.csv");
  int lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  EXPECT_EQ(lines, 4);
  EXPECT_EQ(run({"sweep-heads", "--heads-list", "5", "--trials", "1"}).code, kExitUsage);
}
