// SPDX-License-Identifier: Apache-2.0
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "fixtures.hpp"

namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = kgcrs::testing::scratch_dir(std::string("cli-") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Tiny run settings shared by every invocation.
  std::string tiny() const {
    return " --run.out " + (dir_ / "out").string() +
           " --data.users 60 --data.items 40 --data.attrs 12 --data.attrs_per_item 3"
           " --data.interactions_per_user 8 --fm.dim 8 --fm.epochs 3 --active.episodes 10"
           " --negative.episodes 10 --policy.sessions 10 --policy.batch 16 --eval.sessions 10";
  }

  Outcome invoke(const std::string& args) const {
    auto out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    std::string cmd = std::string(KGCRS_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
    int raw = std::system(cmd.c_str());
    return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(out), slurp(err)};
  }

  fs::path dir_;
};

TEST_F(Cli, UsageAndConfigErrorsExitTwo) {
  EXPECT_EQ(invoke("").code, 2);
  EXPECT_EQ(invoke("--no-such-flag 1 gen-data").code, 2);
  auto bad = invoke("pretrain-fm --fm.dim zero" + tiny());
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("fm.dim"), std::string::npos);
  EXPECT_EQ(invoke("gen-data --set nope=1").code, 2);
  EXPECT_EQ(invoke("--help").code, 0);
}

TEST_F(Cli, StageOrderingIsEnforced) {
  auto ev = invoke("eval" + tiny());
  EXPECT_EQ(ev.code, 3);
  EXPECT_NE(ev.err.find("pretrain-fm"), std::string::npos);
  auto act = invoke("pretrain-active" + tiny());
  EXPECT_EQ(act.code, 3);
  ASSERT_EQ(invoke("pretrain-fm" + tiny()).code, 0);
  auto pol = invoke("train-policy" + tiny());
  EXPECT_EQ(pol.code, 3);
  EXPECT_NE(pol.err.find("pretrain-active"), std::string::npos);
  auto sim = invoke("simulate --seed 7" + tiny());
  EXPECT_EQ(sim.code, 3);
}

TEST_F(Cli, StagedPipelineIsDeterministic) {
  ASSERT_EQ(invoke("gen-data" + tiny()).code, 0);
  for (const char* stage : {"pretrain-fm", "pretrain-active", "pretrain-negative", "train-policy", "eval"}) {
    auto r = invoke(std::string(stage) + tiny());
    ASSERT_EQ(r.code, 0) << stage << ": " << r.err;
  }
  auto out = dir_ / "out";
  auto config = slurp(out / "config.txt");
  auto fp_line = config.substr(0, config.find('\n'));
  auto fp = fp_line.substr(fp_line.rfind(' ') + 1);
  ASSERT_EQ(fp.size(), 16u);
  for (const char* f : {"fm.ckpt", "active.ckpt", "negative.ckpt", "policy-full.ckpt", "eval-full.json",
                        "fm_report.json", "interactions.tsv", "fm_log.jsonl", "transcripts/eval-full.jsonl"})
    EXPECT_NE(slurp(out / f).find(fp), std::string::npos) << f;

  std::map<std::string, std::string> first;
  for (const char* f : {"fm.ckpt", "active.ckpt", "negative.ckpt", "policy-full.ckpt", "eval-full.json"})
    first[f] = slurp(out / f);
  for (const char* stage : {"pretrain-fm", "pretrain-active", "pretrain-negative", "train-policy", "eval"})
    ASSERT_EQ(invoke(std::string(stage) + tiny()).code, 0) << stage;
  for (const auto& [f, bytes] : first) EXPECT_EQ(slurp(out / f), bytes) << f;

  auto a = invoke("simulate --seed 7" + tiny()), b = invoke("simulate --seed 7" + tiny());
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out.find("\"type\":\"end\""), std::string::npos);
  EXPECT_NE(invoke("simulate --seed 8" + tiny()).out, a.out);
  EXPECT_EQ(invoke("simulate --index 100000" + tiny()).code, 2);
}

TEST_F(Cli, ConfigFileAndFlagPrecedence) {
  auto cfg = dir_ / "run.cfg";
  std::ofstream(cfg) << "fm.dim = 4\nrun.seed = 9\n";
  ASSERT_EQ(invoke("gen-data --config " + cfg.string() + tiny()).code, 0);
  auto written = slurp(dir_ / "out" / "config.txt");
  EXPECT_NE(written.find("fm.dim = 8"), std::string::npos);  // the flag wins over the file
  EXPECT_NE(written.find("run.seed = 9"), std::string::npos);
}

}  // namespace
