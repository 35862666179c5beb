// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "kgcrs/metrics.hpp"
#include "kgcrs/session.hpp"

namespace kgcrs {
namespace {

using testing::TinyRun;

std::vector<SimulatedUser> cohort(std::size_t n) {
  const auto& run = TinyRun::shared();
  auto c = make_cohort(run.data.graph(), run.data.split().test);
  if (c.size() > n) c.resize(n);
  return c;
}

bool contains(std::span<const NodeId> xs, NodeId x) { return std::find(xs.begin(), xs.end(), x) != xs.end(); }

// Plays the simulator by hand so per-turn invariants can be checked.
template <typename Check>
Session drive(const SessionConfig& cfg, const SimulatedUser& sim, std::uint64_t seed, Check&& check) {
  const auto& run = TinyRun::shared();
  std::mt19937_64 seeder(seed);
  NodeId p0 = seed_attribute(sim, seeder);
  Session s(run.models(), cfg, "t", sim.user, p0, seeder());
  while (!s.finished()) {
    const auto& p = s.prompt();
    check(s, p);
    s.respond(p.action == Action::ask ? respond_attribute(run.data.graph(), sim, p.attribute)
                                      : respond_recommendation(sim, p.items));
  }
  return s;
}

class EveryVariant : public ::testing::TestWithParam<std::string> {};

TEST_P(EveryVariant, StructuralInvariants) {
  const auto& run = TinyRun::shared();
  auto cfg = run.session(GetParam());
  std::uint64_t seed = 0;
  for (const auto& sim : cohort(60)) {
    std::set<NodeId> asked;
    std::size_t last_candidates = SIZE_MAX;
    auto s = drive(cfg, sim, ++seed, [&](const Session& live, const Prompt& p) {
      EXPECT_LE(live.candidates().size(), last_candidates);
      last_candidates = live.candidates().size();
      EXPECT_TRUE(contains(live.candidates(), sim.target)) << "target filtered out";
      for (auto a : live.pool().remaining) {
        EXPECT_FALSE(contains(live.accepted(), a));
        EXPECT_FALSE(contains(live.rejected(), a));
      }
      if (p.action == Action::ask) {
        EXPECT_TRUE(asked.insert(p.attribute).second) << "attribute asked twice";
        EXPECT_TRUE(contains(live.pool().remaining, p.attribute));
      } else {
        EXPECT_EQ(p.items.size(), std::min(cfg.top_k, live.candidates().size()));
      }
    });
    EXPECT_LE(s.turns().size(), 15u);
    EXPECT_NE(s.status(), SessionStatus::active);
    const auto& last = s.turns().back();
    bool shown = last.action == Action::rec && contains(last.items, sim.target);
    EXPECT_EQ(s.status() == SessionStatus::success, shown);
    if (s.status() == SessionStatus::success) EXPECT_EQ(last.response, Response::accept);
    if (s.status() == SessionStatus::max_turn_fail) {
      EXPECT_EQ(s.turns().size(), 15u);
      EXPECT_EQ(last.reward, cfg.rewards.reach_max_turn);
    }
    for (const auto& t : s.turns()) {
      EXPECT_TRUE(std::isfinite(t.update.attr_loss));
      EXPECT_TRUE(std::isfinite(t.update.item_loss));
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Variants, EveryVariant, ::testing::ValuesIn(Variant::names()));

TEST(Session, AbsGreedyAlwaysRecommends) {
  const auto& run = TinyRun::shared();
  std::vector<Transcript> ts;
  std::uint64_t seed = 0;
  for (const auto& sim : cohort(100)) ts.push_back(to_transcript(run_session(run.models(), run.session("abs_greedy"), sim, ++seed)));
  auto curve = rec_ratio_curve(ts, 15);
  for (std::size_t t = 0; t < curve.size(); ++t) {
    bool reached = std::any_of(ts.begin(), ts.end(), [&](const Transcript& x) { return x.turns.size() > t; });
    EXPECT_EQ(curve[t], reached ? 1.0 : 0.0) << "turn " << t + 1;
  }
}

TEST(Session, MaxEntropyPicksTheRecountedMaximum) {
  const auto& run = TinyRun::shared();
  const auto& g = run.data.graph();
  auto users = cohort(100);
  ASSERT_EQ(users.size(), 100u);
  std::size_t asks = 0;
  std::uint64_t seed = 100;
  for (const auto& sim : users) {
    drive(run.session("max_entropy"), sim, ++seed, [&](const Session& live, const Prompt& p) {
      if (p.action != Action::ask) return;
      ++asks;
      EXPECT_EQ(p.attribute, oracles::max_entropy_recount(g, live.candidates(), live.pool().remaining));
    });
  }
  EXPECT_GT(asks, 100u);
}

TEST(Session, ReplayedStateEqualsLiveState) {
  const auto& run = TinyRun::shared();
  std::uint64_t seed = 0;
  for (const auto& sim : cohort(40)) {
    auto s = run_session(run.models(), run.session(), sim, ++seed);
    std::stringstream buf;
    write_transcript(buf, s);
    auto t = parse_transcript(buf);
    ASSERT_EQ(t.turns.size(), s.transitions().size());
    for (std::size_t k = 0; k < t.turns.size(); ++k) {
      EXPECT_TRUE(replay_state(t, k).isApprox(s.transitions()[k].state, 0.0)) << "turn " << k + 1;
      EXPECT_EQ(s.transitions()[k].terminal, k + 1 == t.turns.size());
    }
  }
}

TEST(Session, TranscriptRoundTrip) {
  const auto& run = TinyRun::shared();
  auto s = run_session(run.models(), run.session(), cohort(1)[0], 3);
  std::stringstream buf;
  write_transcript(buf, s);
  auto t = parse_transcript(buf);
  EXPECT_EQ(t.status, s.status());
  ASSERT_EQ(t.turns.size(), s.turns().size());
  for (std::size_t k = 0; k < t.turns.size(); ++k) EXPECT_EQ(turn_json(t.turns[k]), turn_json(s.turns()[k]));
  std::istringstream bad("{\"type\":\"turn\"}\n");
  EXPECT_THROW(parse_transcript(bad), std::exception);
  std::istringstream headless("");
  EXPECT_THROW(parse_transcript(headless), Error);
}

TEST(Session, SameSeedSameTranscript) {
  const auto& run = TinyRun::shared();
  for (const auto& variant : Variant::names()) {
    auto sim = cohort(5)[4];
    std::stringstream a, b;
    write_transcript(a, run_session(run.models(), run.session(variant), sim, 21));
    write_transcript(b, run_session(run.models(), run.session(variant), sim, 21));
    EXPECT_EQ(a.str(), b.str()) << variant;
  }
}

TEST(OnlineUpdate, AcceptedAttributeProbabilityRisesOnAverage) {
  const auto& run = TinyRun::shared();
  double total = 0.0;
  std::size_t n = 0;
  std::uint64_t seed = 500;
  for (const auto& sim : cohort(100)) {
    std::mt19937_64 seeder(++seed);
    NodeId p0 = seed_attribute(sim, seeder);
    Session s(run.models(), run.session(), "t", sim.user, p0, seeder());
    while (!s.finished()) {
      const auto& p = s.prompt();
      Response r = p.action == Action::ask ? respond_attribute(run.data.graph(), sim, p.attribute)
                                           : respond_recommendation(sim, p.items);
      FmModel before = s.fm();
      s.respond(r);
      if (s.turns().back().update.attr_triples == 0) continue;
      PreferenceContext ctx{s.user(), s.accepted()};
      for (auto a : s.accepted()) {
        PreferenceContext rest{s.user(), {}};
        for (auto q : ctx.attrs)
          if (q != a) rest.add(q);
        total += attr_probability(s.fm(), rest, a) - attr_probability(before, rest, a);
        ++n;
      }
    }
  }
  ASSERT_GT(n, 50u);
  EXPECT_GE(total / static_cast<double>(n), 0.0);
}

TEST(OnlineUpdate, NothingToLearnIsANoOp) {
  const auto& run = TinyRun::shared();
  const auto& g = run.data.graph();
  NodeId seed_attr = g.attributes().front();
  Session s(run.models(), run.session("abs_greedy"), "anon", std::nullopt, seed_attr, 1);
  EXPECT_TRUE(s.anonymous());
  EXPECT_EQ(s.fm().row(s.user()).norm(), 0.0);
  FmModel before = s.fm();
  const auto& p = s.prompt();
  ASSERT_EQ(p.action, Action::rec);
  s.respond(Response::reject);
  const auto& u = s.turns().back().update;
  EXPECT_EQ(u.attr_triples, 0u);
  EXPECT_EQ(u.item_triples, 0u);
  EXPECT_TRUE(s.fm() == before);
}

TEST(Session, ProtocolErrors) {
  const auto& run = TinyRun::shared();
  auto sim = cohort(1)[0];
  Session s(run.models(), run.session(), "p", sim.user, sim.target_attrs.front(), 2);
  try {
    s.respond(Response::accept);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::conflict);
  }
  s.abort("test");
  EXPECT_EQ(s.status(), SessionStatus::aborted);
  try {
    s.prompt();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::gone);
  }
  SessionModels missing = run.models();
  missing.qnet = nullptr;
  EXPECT_THROW(Session(missing, run.session(), "x", sim.user, std::nullopt, 1), Error);
  EXPECT_NO_THROW(Session(missing, run.session("abs_greedy"), "x", sim.user, std::nullopt, 1));
}

TEST(Session, LocalPoolKeepsSeedNeighbours) {
  const auto& run = TinyRun::shared();
  auto cfg = run.session();
  cfg.local_pool = true;
  for (const auto& sim : cohort(20)) {
    NodeId p0 = sim.target_attrs.front();
    Session local(run.models(), cfg, "l", sim.user, p0, 1);
    Session wide(run.models(), run.session(), "w", sim.user, p0, 1);
    EXPECT_LE(local.pool().size(), wide.pool().size());
    for (auto a : local.pool().remaining) {
      EXPECT_TRUE(run.data.adjacency().linked(p0, a));
      EXPECT_TRUE(wide.pool().contains(a));
    }
    for (auto a : wide.pool().remaining)
      if (run.data.adjacency().linked(p0, a)) EXPECT_TRUE(local.pool().contains(a));
  }
}

TEST(Session, PromptIsStableUntilAnswered) {
  const auto& run = TinyRun::shared();
  auto sim = cohort(1)[0];
  Session s(run.models(), run.session(), "p", sim.user, sim.target_attrs.front(), 2);
  Prompt first = s.prompt();
  const auto& again = s.prompt();
  EXPECT_EQ(first.action, again.action);
  EXPECT_EQ(first.attribute, again.attribute);
  EXPECT_EQ(first.items, again.items);
  EXPECT_EQ(s.turn(), 1);
  s.respond(Response::reject);
  EXPECT_EQ(s.turns().size(), 1u);
}

}  // namespace
}  // namespace kgcrs
