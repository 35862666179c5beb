// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "kgcrs/simulator.hpp"

namespace kgcrs {
namespace {

TEST(Simulator, AttributeAnswersPartitionTheAttributes) {
  auto g = testing::random_graph(5, 40, 15, 0.2, 0.1, 3);
  for (auto target : g.items()) {
    auto sim = make_simulated_user(g, 0, target);
    auto truth = g.attributes_of(target);
    std::set<NodeId> accepted, rejected;
    for (auto p : g.attributes()) (respond_attribute(g, sim, p) == Response::accept ? accepted : rejected).insert(p);
    EXPECT_EQ(accepted, std::set<NodeId>(truth.begin(), truth.end()));
    EXPECT_EQ(accepted.size() + rejected.size(), g.attributes().size());
    for (auto p : g.attributes()) EXPECT_EQ(respond_attribute(g, sim, p), respond_attribute(g, sim, p));
  }
}

TEST(Simulator, KindErrors) {
  auto g = testing::random_graph(2, 4, 3, 0.3, 0.5, 1);
  EXPECT_THROW(make_simulated_user(g, 2, 3), Error);
  auto sim = make_simulated_user(g, 0, 2);
  EXPECT_THROW(respond_attribute(g, sim, 3), Error);
  EXPECT_THROW(respond_recommendation(sim, {}), Error);
  EXPECT_THROW(parse_response("maybe"), Error);
}

TEST(Simulator, RecommendationRule) {
  SimulatedUser sim{0, 7, {}};
  std::vector<NodeId> with{3, 7, 9}, without{4};
  EXPECT_EQ(respond_recommendation(sim, with), Response::accept);
  EXPECT_EQ(respond_recommendation(sim, without), Response::reject);
}

TEST(Simulator, RandomListAcceptanceMatchesHypergeometric) {
  const NodeId n_items = 50;
  const std::size_t k = 5;
  const int trials = 20000;
  SimulatedUser sim{0, 17, {}};
  std::vector<NodeId> items(n_items);
  for (NodeId i = 0; i < n_items; ++i) items[i] = i;
  std::mt19937_64 rng(9);
  int hits = 0;
  for (int t = 0; t < trials; ++t) {
    std::shuffle(items.begin(), items.end(), rng);
    hits += respond_recommendation(sim, std::span<const NodeId>(items.data(), k)) == Response::accept;
  }
  double p = static_cast<double>(k) / n_items;
  double sigma = std::sqrt(trials * p * (1 - p));
  EXPECT_LE(std::abs(hits - trials * p), 3 * sigma);
}

TEST(Simulator, SeedAttributeIsTargetAttributeAndUniform) {
  SimulatedUser sim{0, 1, {4, 6, 9}};
  std::mt19937_64 rng(2);
  std::map<NodeId, int> counts;
  const int n = 30000;
  for (int k = 0; k < n; ++k) ++counts[seed_attribute(sim, rng)];
  ASSERT_EQ(counts.size(), 3u);
  double sigma = std::sqrt(n * (1.0 / 3) * (2.0 / 3));
  for (auto [p, c] : counts) EXPECT_LE(std::abs(c - n / 3.0), 3 * sigma) << p;
  std::mt19937_64 a(5), b(5);
  EXPECT_EQ(seed_attribute(sim, a), seed_attribute(sim, b));
  EXPECT_THROW(seed_attribute(SimulatedUser{0, 1, {}}, a), Error);
}

TEST(Simulator, CohortHasOneUserPerHeldOutInteraction) {
  auto g = testing::random_graph(4, 10, 5, 0.3, 0.5, 7);
  std::vector<InteractionRecord> held{{0, 4}, {1, 5}, {1, 6}};
  auto cohort = make_cohort(g, held);
  ASSERT_EQ(cohort.size(), 3u);
  EXPECT_EQ(cohort[2].user, 1u);
  EXPECT_EQ(cohort[2].target, 6u);
}

}  // namespace
}  // namespace kgcrs
