// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "kgcrs/dataset.hpp"

namespace kgcrs {
namespace {

Dataset parse(const std::string& inter, const std::string& trip) {
  std::istringstream a(inter), b(trip);
  return load_dataset(a, b);
}

std::vector<InteractionRecord> records_for(NodeId user, std::size_t n, NodeId first_item) {
  std::vector<InteractionRecord> out;
  for (std::size_t k = 0; k < n; ++k) out.push_back({user, static_cast<NodeId>(first_item + k)});
  return out;
}

TEST(LoadDataset, EmptyFilesGiveEmptyDataset) {
  auto ds = parse("", "");
  EXPECT_TRUE(ds.records.empty());
  EXPECT_TRUE(ds.nodes.empty());
  EXPECT_TRUE(ds.warnings.empty());
}

TEST(LoadDataset, DuplicateInteractionIsDroppedWithWarning) {
  auto ds = parse("u1\ti1\nu1\ti2\nu1\ti1\n", "");
  EXPECT_EQ(ds.records.size(), 2u);
  ASSERT_EQ(ds.warnings.size(), 1u);
  EXPECT_NE(ds.warnings[0].find("line 3"), std::string::npos);
}

TEST(LoadDataset, CommentsAndBlocksOfIds) {
  auto ds = parse("# header\nu1\ti1\nu2\ti2\n", "i1\thas_attribute\ta\ni2\thas_attribute\tb\nb\trelated\te\n");
  EXPECT_EQ(ds.count(NodeKind::user), 2u);
  EXPECT_EQ(ds.count(NodeKind::item), 2u);
  EXPECT_EQ(ds.count(NodeKind::attribute), 2u);
  EXPECT_EQ(ds.count(NodeKind::entity), 1u);
  EXPECT_EQ(*ds.ids.find("u1"), 0u);
  EXPECT_EQ(*ds.ids.find("i1"), 2u);
  EXPECT_EQ(*ds.ids.find("a"), 4u);
  EXPECT_EQ(*ds.ids.find("e"), 6u);
}

TEST(LoadDataset, ErrorsNameTheLine) {
  try {
    parse("u1\ti1\nbroken\n", "");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::load);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  try {
    parse("u1\ti1\n", "ghost\tlinks\te\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ingest);
  }
  EXPECT_THROW(parse("u1\ti1\n", "u1\thas_attribute\ta\n"), Error);
}

TEST(LoadDataset, LastFmShapedGraphLoads) {
  // 9,266 non-user nodes and 138,217 triplets.
  constexpr std::size_t kItems = 7000, kAttrs = 2000, kEntities = 266, kTriplets = 138217;
  std::ostringstream inter, trip;
  for (std::size_t i = 0; i < kItems; ++i) inter << "u" << i % 1800 << "\ti" << i << '\n';
  std::size_t written = 0;
  for (std::size_t k = 0; written < kTriplets - kEntities; ++k, ++written)
    trip << 'i' << (k % kItems) << "\thas_attribute\ta" << ((k * 7 + k / kItems) % kAttrs) << '\n';
  for (std::size_t e = 0; e < kEntities; ++e, ++written) trip << 'a' << e << "\tgenre_of\te" << e << '\n';
  auto ds = parse(inter.str(), trip.str());
  EXPECT_EQ(ds.count(NodeKind::item) + ds.count(NodeKind::attribute) + ds.count(NodeKind::entity), 9266u);
  EXPECT_EQ(ds.item_attribute_edges.size(), kTriplets);
  auto g = ds.graph_with(ds.records);
  EXPECT_EQ(g.size(), 1800u + 9266u);
}

TEST(LoadDataset, YelpShapedCountsAccepted) {
  constexpr std::size_t kUsers = 27675, kItems = 70311, kAttrs = 590;
  std::ostringstream inter, trip;
  for (std::size_t i = 0; i < kItems; ++i) inter << 'u' << i % kUsers << "\ti" << i << '\n';
  for (std::size_t i = 0; i < kItems; ++i) trip << 'i' << i << "\thas_attribute\ta" << i % kAttrs << '\n';
  auto ds = parse(inter.str(), trip.str());
  EXPECT_EQ(ds.count(NodeKind::user), kUsers);
  EXPECT_EQ(ds.count(NodeKind::item), kItems);
  EXPECT_EQ(ds.count(NodeKind::attribute), kAttrs);
}

TEST(IdMapFile, RoundTrips) {
  auto ds = parse("u1\ti1\n", "i1\thas_attribute\ta\n");
  std::stringstream buf;
  ds.ids.write(buf);
  auto back = IdMap::read(buf);
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(*back.find("a"), 2u);
  EXPECT_EQ(back.kind(1), NodeKind::item);
  std::istringstream bad("x\t3\tuser\n");
  EXPECT_THROW(IdMap::read(bad), Error);
}

TEST(Split, TenRecordsGoSevenOneTwo) {
  auto s = split_dataset(records_for(0, 10, 100), 4);
  EXPECT_EQ(s.train.size(), 7u);
  EXPECT_EQ(s.valid.size(), 1u);
  EXPECT_EQ(s.test.size(), 2u);
}

TEST(Split, SingleRecordStaysInTrain) {
  auto s = split_dataset(records_for(0, 1, 100), 4);
  EXPECT_EQ(s.train.size(), 1u);
  EXPECT_TRUE(s.valid.empty());
  EXPECT_TRUE(s.test.empty());
}

TEST(Split, DeterministicPartitionWithinOneRecordOfRatio) {
  std::vector<InteractionRecord> all;
  for (NodeId u = 0; u < 40; ++u) {
    auto r = records_for(u, 1 + (u * 7) % 23, 1000);
    all.insert(all.end(), r.begin(), r.end());
  }
  auto a = split_dataset(all, 17), b = split_dataset(all, 17);
  EXPECT_EQ(a, b);
  std::multiset<std::pair<NodeId, NodeId>> joined, original;
  for (const auto* part : {&a.train, &a.valid, &a.test})
    for (const auto& r : *part) joined.insert({r.user, r.item});
  for (const auto& r : all) original.insert({r.user, r.item});
  EXPECT_EQ(joined, original);
  std::map<NodeId, std::array<std::size_t, 4>> counts;
  for (const auto& r : a.train) ++counts[r.user][0];
  for (const auto& r : a.valid) ++counts[r.user][1];
  for (const auto& r : a.test) ++counts[r.user][2];
  for (const auto& r : all) ++counts[r.user][3];
  for (const auto& [u, c] : counts) {
    double n = static_cast<double>(c[3]);
    EXPECT_GE(c[0], 1u);
    if (c[3] < 3) continue;
    EXPECT_LE(std::abs(static_cast<double>(c[0]) - 0.7 * n), 1.0) << "user " << u;
    EXPECT_LE(std::abs(static_cast<double>(c[1]) - 0.1 * n), 1.0) << "user " << u;
    EXPECT_LE(std::abs(static_cast<double>(c[2]) - 0.2 * n), 1.0) << "user " << u;
  }
}

TEST(PairwiseSets, ForcedChoice) {
  auto ds = parse("u\ta\n", "a\thas_attribute\tp\nb\thas_attribute\tq\n");
  auto g = ds.graph_with(ds.records);
  auto sets = build_pairwise_sets(ds.records, g, 1, 3);
  NodeId u = *ds.ids.find("u"), a = *ds.ids.find("a"), b = *ds.ids.find("b");
  ASSERT_EQ(sets.items.size(), 1u);
  EXPECT_EQ(sets.items[0], (ItemTriple{u, a, b}));
  ASSERT_EQ(sets.attrs.size(), 1u);
  EXPECT_EQ(sets.attrs[0], (AttrTriple{u, *ds.ids.find("p"), *ds.ids.find("q"), a}));
}

TEST(PairwiseSets, UserWithEveryItemIsSkipped) {
  auto ds = parse("u\ta\nu\tb\n", "a\thas_attribute\tp\n");
  auto g = ds.graph_with(ds.records);
  auto sets = build_pairwise_sets(ds.records, g, 2, 3);
  EXPECT_TRUE(sets.items.empty());
  EXPECT_EQ(sets.warnings.size(), 1u);
  EXPECT_THROW(build_pairwise_sets(ds.records, g, 0, 3), Error);
}

TEST(PairwiseSets, FourNegativesPerPositiveOnSyntheticSet) {
  auto ds = load_dataset(generate_synthetic({10, 40, 12, 3, 10, 2}));
  ASSERT_EQ(ds.records.size(), 100u);
  auto g = ds.graph_with(ds.records);
  auto positives = index_positives(ds.records);
  auto sets = build_pairwise_sets(ds.records, positives, g, 4, 5);
  EXPECT_EQ(sets.items.size(), 400u);
  for (const auto& t : sets.items) {
    ASSERT_TRUE(positives.at(t.user).count(t.pos));
    ASSERT_FALSE(positives.at(t.user).count(t.neg));
  }
  for (const auto& t : sets.attrs) {
    auto pos_attrs = g.attributes_of(t.source_item);
    EXPECT_TRUE(std::binary_search(pos_attrs.begin(), pos_attrs.end(), t.pos));
    EXPECT_FALSE(std::binary_search(pos_attrs.begin(), pos_attrs.end(), t.neg));
  }
}

TEST(Synthetic, SmallestSpec) {
  auto ds = load_dataset(generate_synthetic({1, 1, 1, 1, 1, 1}));
  EXPECT_EQ(ds.records.size(), 1u);
  EXPECT_EQ(ds.nodes.size(), 3u);
}

TEST(Synthetic, DefaultSpecHas730Nodes) {
  auto ds = load_dataset(generate_synthetic({500, 200, 30, 5, 20, 1}));
  auto g = ds.graph_with(ds.records);
  EXPECT_EQ(g.size(), 730u);
  EXPECT_EQ(ds.records.size(), 500u * 20u);
}

TEST(Synthetic, EveryItemHasExactlyAttrsPerItem) {
  for (std::size_t per : {1u, 3u, 5u, 8u, 12u}) {
    auto ds = load_dataset(generate_synthetic({30, 60, 12, per, 5, 7}));
    auto g = ds.graph_with(ds.records);
    for (auto i : g.items()) ASSERT_EQ(g.attributes_of(i).size(), per) << "attrs_per_item " << per;
  }
}

TEST(Synthetic, SameSeedIsByteIdentical) {
  auto dir = testing::scratch_dir("synthetic");
  write_synthetic(generate_synthetic({50, 40, 12, 4, 6, 9}), dir / "a");
  write_synthetic(generate_synthetic({50, 40, 12, 4, 6, 9}), dir / "b");
  for (const char* f : {"interactions.tsv", "triplets.tsv"}) {
    std::ifstream x(dir / "a" / f, std::ios::binary), y(dir / "b" / f, std::ios::binary);
    std::string sx((std::istreambuf_iterator<char>(x)), {}), sy((std::istreambuf_iterator<char>(y)), {});
    EXPECT_FALSE(sx.empty());
    EXPECT_EQ(sx, sy) << f;
  }
  EXPECT_NE(generate_synthetic({50, 40, 12, 4, 6, 10}).interactions, generate_synthetic({50, 40, 12, 4, 6, 9}).interactions);
  std::filesystem::remove_all(dir);
}

TEST(Synthetic, InfeasibleCountsRejected) {
  EXPECT_THROW(generate_synthetic({0, 1, 1, 1, 1, 1}), Error);
  EXPECT_THROW(generate_synthetic({1, 1, 2, 3, 1, 1}), Error);
  EXPECT_THROW(generate_synthetic({1, 2, 1, 1, 3, 1}), Error);
}

}  // namespace
}  // namespace kgcrs
