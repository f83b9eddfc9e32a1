#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "ipa/checkpoint.hpp"
#include "ipa/metrics.hpp"
#include "ipa/run_config.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(IPA_CLI_PATH) + " " + args + " 2>&1";
  Result r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) r.out += buf.data();
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class Workdir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("ipa_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::string text;
    for (int i = 0; i < 60; ++i) {
      text += "the quick brown fox jumps over the lazy dog " + std::to_string(i % 7) + "\n";
    }
    std::ofstream(dir_ / "corpus.txt") << text;
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void write_config(const std::string& kind, std::size_t steps) {
    ipa::json model = kind == "ipa"
                          ? ipa::json{{"n", 8}, {"m_max", 16}, {"layers", 1}, {"p_col", 2}, {"p_row", 2}, {"k", 4}}
                          : ipa::json{{"n", 8}, {"heads", 2}, {"d_ff", 16}, {"layers", 1}, {"m_max", 16}};
    const ipa::json cfg = {
        {"kind", kind},
        {"model", model},
        {"train",
         {{"learning_rate", 0.01}, {"batch_size", 2}, {"seq_len", 16}, {"max_steps", steps},
          {"eval_interval", 5}, {"seed", 1}}},
        {"data", {{"corpus", "corpus.txt"}, {"vocab", 280}}},
        {"output", {{"checkpoint", "run.ckpt"}, {"metrics", "run.jsonl"}, {"tokenizer", "tok.txt"}}}};
    std::ofstream(dir_ / "run.json") << cfg.dump(2);
  }

  fs::path dir_;
};

}  // namespace

TEST(Cli, GradcheckPassesForBothKinds) {
  for (const char* kind : {"ipa", "gpt"}) {
    const auto r = run(std::string("gradcheck --model-kind ") + kind + " --seed 0");
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("max_relative_error"), std::string::npos);
  }
}

TEST(Cli, ParamsReportsSequenceDeltas) {
  const auto r = run(std::string("params --config ") + IPA_SOURCE_DIR + "/configs/reference.json --m 100 --m 500");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("+192000"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("+48000"), std::string::npos) << r.out;
}

TEST(Cli, BadFlagsAndMissingFiles) {
  EXPECT_EQ(run("gradcheck --model-kind rnn").code, 2);
  EXPECT_EQ(run("train").code, 2);
  EXPECT_EQ(run("train --config /nonexistent/run.json").code, 4);
  EXPECT_EQ(run("--help").code, 0);
}

TEST_F(Workdir, InvalidConfigNamesField) {
  write_config("ipa", 5);
  auto j = ipa::json::parse(std::ifstream(dir_ / "run.json"));
  j["model"]["k"] = 99;
  std::ofstream(dir_ / "run.json") << j.dump();
  const auto r = run("train --config " + path("run.json"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("model.k"), std::string::npos) << r.out;
}

TEST_F(Workdir, TrainEvalGenerateAndResume) {
  write_config("ipa", 10);
  auto r = run("train --config " + path("run.json"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto metrics = ipa::read_metrics(path("run.jsonl"));
  ASSERT_EQ(metrics.size(), 5u);  // test@0, train+test@5, train+test@10

  // The echoed config equals the input with the vocabulary filled in.
  const auto rec = ipa::read_checkpoint(path("run.ckpt.last"));
  const auto input = ipa::RunConfig::load(path("run.json"));
  auto echoed = input.to_json();
  echoed["model"] = input.resolved_model(280);
  EXPECT_EQ(rec.header["run_config"], echoed);

  // Same config twice -> same losses.
  fs::rename(path("run.jsonl"), path("first.jsonl"));
  ASSERT_EQ(run("train --config " + path("run.json")).code, 0);
  const auto again = ipa::read_metrics(path("run.jsonl"));
  ASSERT_EQ(again.size(), metrics.size());
  for (std::size_t i = 0; i < again.size(); ++i) EXPECT_EQ(again[i].loss, metrics[i].loss);

  r = run("eval --checkpoint " + path("run.ckpt") + " --corpus " + path("corpus.txt") + " --m 16");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("\"split\":\"eval\""), std::string::npos) << r.out;

  r = run("generate --checkpoint " + path("run.ckpt") + " --prompt 'the quick' --max-new 0");
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "the quick\n");
  r = run("generate --checkpoint " + path("run.ckpt") + " --prompt 'the quick' --max-new 5 --seed 3");
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, run("generate --checkpoint " + path("run.ckpt") +
                       " --prompt 'the quick' --max-new 5 --seed 3").out);

  // Resume to 20 steps; the first 10 steps of a 20-step run match as well.
  write_config("ipa", 20);
  ASSERT_EQ(run("train --config " + path("run.json") + " --resume " + path("run.ckpt.last")).code, 0);
  const auto resumed = ipa::read_metrics(path("run.jsonl"));
  fs::remove(path("run.jsonl"));
  ASSERT_EQ(run("train --config " + path("run.json")).code, 0);
  const auto straight = ipa::read_metrics(path("run.jsonl"));
  ASSERT_EQ(resumed.size(), straight.size());
  for (std::size_t i = 0; i < straight.size(); ++i) {
    EXPECT_EQ(resumed[i].step, straight[i].step);
    EXPECT_EQ(resumed[i].loss, straight[i].loss) << i;
  }
}

TEST_F(Workdir, GptRunAndMismatchedResume) {
  write_config("gpt", 5);
  ASSERT_EQ(run("train --config " + path("run.json")).code, 0);
  write_config("ipa", 10);
  const auto r = run("train --config " + path("run.json") + " --resume " + path("run.ckpt.last"));
  EXPECT_EQ(r.code, 2) << r.out;
}

TEST_F(Workdir, TokenizerTrain) {
  const auto r = run("tokenizer-train --corpus " + path("corpus.txt") + " --vocab 270 --out " + path("t.txt"));
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("vocab 270"), std::string::npos) << r.out;
  EXPECT_TRUE(fs::exists(path("t.txt")));
}
