// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "kgcrs/artifacts.hpp"
#include "kgcrs/config.hpp"
#include "kgcrs/pipeline.hpp"

namespace kgcrs {
namespace {

using testing::TinyRun;

TEST(RunConfig, FingerprintIgnoresOutputAndServing) {
  RunConfig a, b;
  b.set("run.out", "elsewhere");
  b.set("serve.port", "9999");
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  b.set("run.seed", "2");
  EXPECT_NE(a.fingerprint(), b.fingerprint());
  EXPECT_EQ(a.fingerprint().size(), 16u);
}

TEST(RunConfig, MergeAndErrors) {
  RunConfig c;
  std::istringstream in("# comment\n\nfm.dim = 8\n  policy.reward=R_EAR  \n");
  c.merge(in);
  EXPECT_EQ(c.as<int>("fm.dim"), 8);
  EXPECT_EQ(c.get("policy.reward"), "R_EAR");
  std::istringstream later("fm.dim = 12\n");
  c.merge(later);
  EXPECT_EQ(c.as<int>("fm.dim"), 12);
  std::istringstream unknown("fm.size = 3\n");
  EXPECT_THROW(c.merge(unknown), Error);
  std::istringstream malformed("fm.dim 3\n");
  try {
    c.merge(malformed, "x.cfg");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::config);
    EXPECT_NE(std::string(e.what()).find("x.cfg:1"), std::string::npos);
  }
  c.set("fm.lr", "fast");
  EXPECT_THROW(c.as<double>("fm.lr"), Error);
  EXPECT_EQ(RunConfig().list("eval.seeds"), (std::vector<std::string>{"1", "2", "3", "4", "5"}));
}

TEST(RunConfig, WrittenConfigReproducesFingerprint) {
  RunConfig c;
  c.set("fm.dim", "24");
  c.set("eval.seeds", "3,4");
  std::stringstream buf;
  c.write(buf);
  RunConfig back;
  back.merge(buf);
  EXPECT_EQ(back.fingerprint(), c.fingerprint());
  EXPECT_EQ(back.values(), c.values());
}

TEST(Settings, RejectInvalidValues) {
  RunConfig c;
  c.set("session.variant", "best");
  EXPECT_THROW(settings_from(c), Error);
  RunConfig d;
  d.set("data.interactions", "x.tsv");
  EXPECT_THROW(settings_from(d), Error);
  RunConfig e;
  e.set("fm.dim", "0");
  try {
    settings_from(e);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::config);
  }
}

TEST(DeriveSeed, DistinctStreams) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t base : {1u, 2u, 3u})
    for (const char* label : {"fm.init", "fm.train", "split", "eval.session"})
      for (std::uint64_t k = 0; k < 5; ++k) seen.insert(derive_seed(base, label, k));
  EXPECT_EQ(seen.size(), 60u);
  EXPECT_EQ(derive_seed(4, "x", 2), derive_seed(4, "x", 2));
}

std::string bytes(const auto& fn) {
  std::ostringstream out;
  fn(out);
  return out.str();
}

TEST(Determinism, CheckpointsAreBitIdentical) {
  auto c = TinyRun::tiny_config();
  c.set("policy.sessions", "15");
  TinyRun a(c), b(c);
  const auto& fp = a.settings.fingerprint;
  EXPECT_EQ(bytes([&](std::ostream& o) { save_fm(o, a.fm, fp); }), bytes([&](std::ostream& o) { save_fm(o, b.fm, fp); }));
  EXPECT_EQ(bytes([&](std::ostream& o) { a.active.save(o, fp); }), bytes([&](std::ostream& o) { b.active.save(o, fp); }));
  EXPECT_EQ(bytes([&](std::ostream& o) { a.negative.save(o, fp); }),
            bytes([&](std::ostream& o) { b.negative.save(o, fp); }));
  EXPECT_EQ(bytes([&](std::ostream& o) { save_qnet(o, a.qnet, fp); }),
            bytes([&](std::ostream& o) { save_qnet(o, b.qnet, fp); }));
  c.set("run.seed", "2");
  TinyRun other(c);
  EXPECT_FALSE(other.fm == a.fm);
}

TEST(Evaluate, ReportsAreBitIdentical) {
  const auto& run = TinyRun::shared();
  auto cohort = eval_cohort(run.data, run.settings.seed, 30);
  ASSERT_EQ(cohort.size(), 30u);
  auto report = [&] {
    auto ts = evaluate(run.data, run.models(), run.settings, Variant::named("full"), cohort);
    return to_json(compute_metrics(ts, 15, run.settings.fingerprint, {run.settings.seed})).dump();
  };
  EXPECT_EQ(report(), report());
}

TEST(Grid, OneConfigOneSeedIsOneRow) {
  auto c = TinyRun::tiny_config();
  c.set("policy.sessions", "10");
  c.set("eval.sessions", "10");
  std::vector<std::string> variants{"full"}, rewards{"R_CPR"};
  std::vector<std::uint64_t> seeds{1};
  auto rows = run_grid(c, variants, rewards, seeds);
  ASSERT_EQ(rows.size(), 1u);
  ASSERT_TRUE(rows[0].report) << rows[0].error;
  EXPECT_EQ(rows[0].report->cohort, 10u);
}

TEST(Grid, FailingRowIsIsolated) {
  auto c = TinyRun::tiny_config();
  c.set("policy.sessions", "5");
  c.set("eval.sessions", "5");
  std::vector<std::string> variants{"nonsense", "abs_greedy"}, rewards{"R_CPR"};
  std::vector<std::uint64_t> seeds{1};
  auto rows = run_grid(c, variants, rewards, seeds);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_FALSE(rows[0].report);
  EXPECT_FALSE(rows[0].error.empty());
  EXPECT_TRUE(rows[1].report) << rows[1].error;
}

TEST(Grid, TwoSeedStdevByHand) {
  auto c = TinyRun::tiny_config();
  c.set("policy.sessions", "10");
  c.set("eval.sessions", "20");
  std::vector<std::string> variants{"abs_greedy"}, rewards{"R_CPR"};
  std::vector<std::uint64_t> seeds{1, 2};
  auto rows = run_grid(c, variants, rewards, seeds);
  ASSERT_EQ(rows.size(), 2u);
  auto sum = summarize_grid(rows);
  ASSERT_EQ(sum.size(), 1u);
  double a = rows[0].report->sr.back(), b = rows[1].report->sr.back();
  EXPECT_DOUBLE_EQ(sum[0].sr15.mean, (a + b) / 2);
  EXPECT_NEAR(sum[0].sr15.stdev, std::abs(a - b) / std::sqrt(2.0), 1e-15);
  EXPECT_EQ(sum[0].runs, 2u);
}

TEST(ArtifactStore, MissingCheckpointNamesStage) {
  ArtifactStore store(testing::scratch_dir("store"));
  try {
    store.load_fm();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::precondition);
    EXPECT_NE(std::string(e.what()).find("pretrain-fm"), std::string::npos);
  }
  EXPECT_THROW(load_models(store, Variant::named("full")), Error);
  const auto& run = TinyRun::shared();
  store.save_fm(run.fm, "fp");
  EXPECT_TRUE(store.load_fm() == run.fm);
  try {
    load_models(store, Variant::named("full"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("pretrain-active"), std::string::npos);
  }
  std::filesystem::remove_all(store.dir());
}

}  // namespace
}  // namespace kgcrs
