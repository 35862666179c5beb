// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "kgcrs/error.hpp"
#include "kgcrs/graph.hpp"

namespace kgcrs {

struct InteractionRecord {
  NodeId user;
  NodeId item;
  friend bool operator==(const InteractionRecord&, const InteractionRecord&) = default;
  friend auto operator<=>(const InteractionRecord&, const InteractionRecord&) = default;
};

struct ItemTriple {
  NodeId user;
  NodeId pos;
  NodeId neg;
  friend bool operator==(const ItemTriple&, const ItemTriple&) = default;
};

// `source_item` is the positive item p+ was drawn from; training uses its
// remaining attributes as the preference context.
struct AttrTriple {
  NodeId user;
  NodeId pos;
  NodeId neg;
  NodeId source_item;
  friend bool operator==(const AttrTriple&, const AttrTriple&) = default;
};

struct PairwiseSets {
  std::vector<ItemTriple> items;  // O_I
  std::vector<AttrTriple> attrs;  // O_A
  std::vector<std::string> warnings;
};

struct DatasetSplit {
  std::vector<InteractionRecord> train;
  std::vector<InteractionRecord> valid;
  std::vector<InteractionRecord> test;
  friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

// Bidirectional external-string <-> dense-id map.
class IdMap {
 public:
  NodeId intern(const std::string& ext, NodeKind kind) {
    if (auto it = index_.find(ext); it != index_.end()) {
      if (kinds_[it->second] != kind)
        fail(ErrorCode::ingest, "id '" + ext + "' declared as " + to_string(kinds_[it->second]) + " and " +
                                    to_string(kind));
      return it->second;
    }
    auto id = static_cast<NodeId>(names_.size());
    index_.emplace(ext, id);
    names_.push_back(ext);
    kinds_.push_back(kind);
    return id;
  }

  std::optional<NodeId> find(const std::string& ext) const {
    if (auto it = index_.find(ext); it != index_.end()) return it->second;
    return std::nullopt;
  }

  const std::string& name(NodeId id) const { return names_.at(id); }
  NodeKind kind(NodeId id) const { return kinds_.at(id); }
  std::size_t size() const noexcept { return names_.size(); }

  void write(std::ostream& out) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
      out << names_[i] << '\t' << i << '\t' << to_string(kinds_[i]) << '\n';
  }

  static IdMap read(std::istream& in) {
    IdMap m;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ls(line);
      std::string ext, id, kind;
      if (!std::getline(ls, ext, '\t') || !std::getline(ls, id, '\t') || !std::getline(ls, kind))
        fail(ErrorCode::load, "id-map line " + std::to_string(lineno) + ": expected 3 tab-separated fields");
      NodeKind k = parse_kind(kind, lineno);
      if (std::to_string(m.size()) != id)
        fail(ErrorCode::load, "id-map line " + std::to_string(lineno) + ": ids must be dense and in order");
      m.intern(ext, k);
    }
    return m;
  }

 private:
  static NodeKind parse_kind(const std::string& s, std::size_t lineno) {
    for (auto k : {NodeKind::user, NodeKind::item, NodeKind::attribute, NodeKind::entity})
      if (s == to_string(k)) return k;
    fail(ErrorCode::load, "id-map line " + std::to_string(lineno) + ": unknown kind '" + s + "'");
  }

  std::unordered_map<std::string, NodeId> index_;
  std::vector<std::string> names_;
  std::vector<NodeKind> kinds_;
};

struct Dataset {
  IdMap ids;
  std::vector<InteractionRecord> records;
  std::vector<NodeDescriptor> nodes;
  std::vector<EdgeDescriptor> item_attribute_edges;  // HasAttribute + External triplets
  std::vector<std::string> warnings;

  std::size_t count(NodeKind k) const {
    return static_cast<std::size_t>(
        std::count_if(nodes.begin(), nodes.end(), [k](const NodeDescriptor& d) { return d.kind == k; }));
  }

  // Node and edge streams for kg-store, with Interact edges drawn from `interactions`.
  std::vector<EdgeDescriptor> edges_with(std::span<const InteractionRecord> interactions) const {
    std::vector<EdgeDescriptor> out;
    out.reserve(interactions.size() + item_attribute_edges.size());
    for (const auto& r : interactions) out.push_back({r.user, r.item, EdgeKind::interact, "interact"});
    out.insert(out.end(), item_attribute_edges.begin(), item_attribute_edges.end());
    return out;
  }

  HeteroGraph graph_with(std::span<const InteractionRecord> interactions) const {
    auto edges = edges_with(interactions);
    return load_graph(nodes, edges);
  }
};

inline constexpr const char* kAttributeRelation = "has_attribute";

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find('\t', start);
    out.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  if (!out.empty() && !out.back().empty() && out.back().back() == '\r') out.back().pop_back();
  return out;
}

template <typename Fn>
void for_each_row(std::istream& in, const char* what, std::size_t arity, Fn&& fn) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto f = split_tabs(line);
    if (f.size() != arity || std::any_of(f.begin(), f.end(), [](const auto& s) { return s.empty(); }))
      fail(ErrorCode::load, std::string(what) + " line " + std::to_string(lineno) + ": expected " +
                                std::to_string(arity) + " non-empty tab-separated fields");
    fn(f, lineno);
  }
}

}  // namespace detail

// Parses `user<TAB>item` interactions and `head<TAB>relation<TAB>tail` triplets.
// Dense ids are assigned in blocks: users, items, attributes, then entities,
// each in order of first appearance. A `has_attribute` triplet declares its
// head as an item and its tail as an attribute; any other relation requires a
// known head and declares an unknown tail as an entity.
inline Dataset load_dataset(std::istream& interactions, std::istream& triplets) {
  struct Row {
    std::string a, rel, b;
    std::size_t line;
  };
  std::vector<std::pair<std::string, std::string>> inter_rows;
  std::vector<std::size_t> inter_lines;
  detail::for_each_row(interactions, "interactions", 2, [&](const auto& f, std::size_t ln) {
    inter_rows.emplace_back(f[0], f[1]);
    inter_lines.push_back(ln);
  });
  std::vector<Row> trip_rows;
  detail::for_each_row(triplets, "triplets", 3,
                       [&](const auto& f, std::size_t ln) { trip_rows.push_back({f[0], f[1], f[2], ln}); });

  // Resolve kinds first so ids can be assigned in kind blocks.
  std::unordered_map<std::string, NodeKind> kind_of;
  std::vector<std::string> order[4];
  auto declare = [&](const std::string& ext, NodeKind k, const char* where, std::size_t ln) {
    auto [it, inserted] = kind_of.emplace(ext, k);
    if (inserted) {
      order[static_cast<int>(k)].push_back(ext);
    } else if (it->second != k) {
      fail(ErrorCode::ingest, std::string(where) + " line " + std::to_string(ln) + ": id '" + ext +
                                  "' used as " + to_string(k) + " but already declared " +
                                  to_string(it->second));
    }
  };
  for (std::size_t r = 0; r < inter_rows.size(); ++r) {
    declare(inter_rows[r].first, NodeKind::user, "interactions", inter_lines[r]);
    declare(inter_rows[r].second, NodeKind::item, "interactions", inter_lines[r]);
  }
  for (const auto& t : trip_rows) {
    if (t.rel != kAttributeRelation) continue;
    declare(t.a, NodeKind::item, "triplets", t.line);
    declare(t.b, NodeKind::attribute, "triplets", t.line);
  }
  for (const auto& t : trip_rows) {
    if (t.rel == kAttributeRelation) continue;
    if (!kind_of.count(t.a))
      fail(ErrorCode::ingest, "triplets line " + std::to_string(t.line) + ": unknown head id '" + t.a + "'");
    if (!kind_of.count(t.b)) declare(t.b, NodeKind::entity, "triplets", t.line);
  }

  Dataset ds;
  for (int k = 0; k < 4; ++k)
    for (const auto& ext : order[k]) {
      auto id = ds.ids.intern(ext, static_cast<NodeKind>(k));
      ds.nodes.push_back({id, static_cast<NodeKind>(k)});
    }

  std::set<std::pair<NodeId, NodeId>> seen;
  for (std::size_t r = 0; r < inter_rows.size(); ++r) {
    InteractionRecord rec{*ds.ids.find(inter_rows[r].first), *ds.ids.find(inter_rows[r].second)};
    if (!seen.insert({rec.user, rec.item}).second) {
      ds.warnings.push_back("interactions line " + std::to_string(inter_lines[r]) + ": duplicate interaction (" +
                            inter_rows[r].first + ", " + inter_rows[r].second + ") dropped");
      continue;
    }
    ds.records.push_back(rec);
  }
  for (const auto& t : trip_rows) {
    NodeId a = *ds.ids.find(t.a), b = *ds.ids.find(t.b);
    if (t.rel == kAttributeRelation) {
      ds.item_attribute_edges.push_back({a, b, EdgeKind::has_attribute, t.rel});
    } else {
      NodeKind ka = ds.ids.kind(a), kb = ds.ids.kind(b);
      if (!detail::edge_kind_allowed(EdgeKind::external, ka, kb))
        fail(ErrorCode::ingest, "triplets line " + std::to_string(t.line) + ": relation '" + t.rel +
                                    "' must touch an entity or attribute");
      ds.item_attribute_edges.push_back({a, b, EdgeKind::external, t.rel});
    }
  }
  return ds;
}

inline Dataset load_dataset(const std::filesystem::path& interactions, const std::filesystem::path& triplets) {
  std::ifstream fi(interactions), ft(triplets);
  if (!fi) fail(ErrorCode::load, "cannot open " + interactions.string());
  if (!ft) fail(ErrorCode::load, "cannot open " + triplets.string());
  return load_dataset(fi, ft);
}

// Per-user stratified 7:1:2 split. Users with fewer than three records keep
// everything in train.
inline DatasetSplit split_dataset(std::span<const InteractionRecord> records, std::uint64_t seed) {
  std::map<NodeId, std::vector<InteractionRecord>> per_user;
  for (const auto& r : records) per_user[r.user].push_back(r);
  std::mt19937_64 rng(seed);
  DatasetSplit s;
  for (auto& [user, recs] : per_user) {
    std::sort(recs.begin(), recs.end());
    std::shuffle(recs.begin(), recs.end(), rng);
    const std::size_t n = recs.size();
    std::size_t n_valid = 0, n_test = 0;
    if (n >= 3) {
      n_valid = static_cast<std::size_t>(std::floor(0.1 * static_cast<double>(n) + 0.5));
      n_test = static_cast<std::size_t>(std::floor(0.2 * static_cast<double>(n) + 0.5));
    }
    const std::size_t n_train = n - n_valid - n_test;
    s.train.insert(s.train.end(), recs.begin(), recs.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.valid.insert(s.valid.end(), recs.begin() + static_cast<std::ptrdiff_t>(n_train),
                   recs.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid));
    s.test.insert(s.test.end(), recs.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid), recs.end());
  }
  return s;
}

using PositiveIndex = std::unordered_map<NodeId, std::unordered_set<NodeId>>;

inline PositiveIndex index_positives(std::span<const InteractionRecord> records) {
  PositiveIndex idx;
  for (const auto& r : records) idx[r.user].insert(r.item);
  return idx;
}

// Pairs every record in `records` with `neg_per_pos` uniform negatives drawn
// from I \ I+(u), where I+(u) comes from `positives`. Each item triple also
// yields one attribute triple: p+ from P_{i+}, p- from P_{i-} \ P_{i+}.
inline PairwiseSets build_pairwise_sets(std::span<const InteractionRecord> records, const PositiveIndex& positives,
                                        const HeteroGraph& graph, int neg_per_pos, std::uint64_t seed) {
  if (neg_per_pos < 1) fail(ErrorCode::parameter, "neg_per_pos must be >= 1");
  PairwiseSets out;
  std::mt19937_64 rng(seed);
  const auto& items = graph.items();
  std::set<NodeId> warned;
  static const std::unordered_set<NodeId> kEmpty;
  for (const auto& r : records) {
    auto it = positives.find(r.user);
    const auto& pos = it == positives.end() ? kEmpty : it->second;
    std::vector<NodeId> pool;
    pool.reserve(items.size());
    for (auto i : items)
      if (!pos.count(i) && i != r.item) pool.push_back(i);
    if (pool.empty()) {
      if (warned.insert(r.user).second)
        out.warnings.push_back("user " + std::to_string(r.user) + " has interacted with every item; skipped");
      continue;
    }
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    auto pos_attrs = graph.attributes_of(r.item);
    for (int k = 0; k < neg_per_pos; ++k) {
      NodeId neg = pool[pick(rng)];
      out.items.push_back({r.user, r.item, neg});
      if (pos_attrs.empty()) continue;
      std::vector<NodeId> neg_attrs;
      for (auto p : graph.attributes_of(neg))
        if (!std::binary_search(pos_attrs.begin(), pos_attrs.end(), p)) neg_attrs.push_back(p);
      if (neg_attrs.empty()) continue;
      std::uniform_int_distribution<std::size_t> pp(0, pos_attrs.size() - 1), pn(0, neg_attrs.size() - 1);
      NodeId p_pos = pos_attrs[pp(rng)];
      NodeId p_neg = neg_attrs[pn(rng)];
      out.attrs.push_back({r.user, p_pos, p_neg, r.item});
    }
  }
  return out;
}

inline PairwiseSets build_pairwise_sets(std::span<const InteractionRecord> train, const HeteroGraph& graph,
                                        int neg_per_pos, std::uint64_t seed) {
  return build_pairwise_sets(train, index_positives(train), graph, neg_per_pos, seed);
}

struct SyntheticSpec {
  std::size_t n_users = 500;
  std::size_t n_items = 200;
  std::size_t n_attrs = 30;
  std::size_t attrs_per_item = 5;
  std::size_t interactions_per_user = 20;
  std::uint64_t seed = 1;
};

struct SyntheticFiles {
  std::string interactions;
  std::string triplets;
};

// Attributes are grouped into categories (about six attributes each). Each
// item draws most attributes from one primary category; item and user latent
// vectors live in a shared space so that a user's positives cluster around
// the categories they prefer.
inline SyntheticFiles generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n_users < 1 || spec.n_items < 1 || spec.n_attrs < 1 || spec.attrs_per_item < 1 ||
      spec.interactions_per_user < 1)
    fail(ErrorCode::parameter, "synthetic counts must all be >= 1");
  if (spec.attrs_per_item > spec.n_attrs) fail(ErrorCode::parameter, "attrs_per_item exceeds n_attrs");
  if (spec.interactions_per_user > spec.n_items)
    fail(ErrorCode::parameter, "interactions_per_user exceeds n_items");

  constexpr int kLatent = 8;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t n_cats = std::max<std::size_t>(1, spec.n_attrs / 6);

  auto random_vec = [&](double scale) {
    std::array<double, kLatent> v{};
    for (auto& x : v) x = scale * gauss(rng);
    return v;
  };
  std::vector<std::array<double, kLatent>> cat_center(n_cats);
  for (auto& c : cat_center) c = random_vec(1.0);
  std::vector<std::vector<std::size_t>> cat_attrs(n_cats);
  std::vector<std::array<double, kLatent>> attr_vec(spec.n_attrs);
  for (std::size_t a = 0; a < spec.n_attrs; ++a) {
    cat_attrs[a % n_cats].push_back(a);
    auto noise = random_vec(0.5);
    for (int d = 0; d < kLatent; ++d) attr_vec[a][d] = cat_center[a % n_cats][d] + noise[d];
  }

  std::vector<std::vector<std::size_t>> item_attrs(spec.n_items);
  std::vector<std::array<double, kLatent>> item_vec(spec.n_items);
  std::uniform_int_distribution<std::size_t> pick_cat(0, n_cats - 1), pick_attr(0, spec.n_attrs - 1);
  for (std::size_t i = 0; i < spec.n_items; ++i) {
    std::size_t cat = pick_cat(rng);
    auto& chosen = item_attrs[i];
    // Cover every attribute at least once when the catalog is large enough.
    if (i < spec.n_attrs && spec.n_items >= spec.n_attrs) {
      chosen.push_back(i);
      cat = i % n_cats;
    }
    while (chosen.size() < spec.attrs_per_item) {
      std::size_t a;
      const auto& own = cat_attrs[cat];
      if (unit(rng) < 0.8 && !own.empty()) {
        std::uniform_int_distribution<std::size_t> pick_own(0, own.size() - 1);
        a = own[pick_own(rng)];
      } else {
        a = pick_attr(rng);
      }
      if (std::find(chosen.begin(), chosen.end(), a) == chosen.end()) {
        chosen.push_back(a);
      } else if (own.size() <= chosen.size()) {
        // Category exhausted; fall back to any unused attribute.
        for (std::size_t b = 0; b < spec.n_attrs && chosen.size() < spec.attrs_per_item; ++b)
          if (std::find(chosen.begin(), chosen.end(), b) == chosen.end() && unit(rng) < 0.5) chosen.push_back(b);
      }
    }
    std::sort(chosen.begin(), chosen.end());
    auto noise = random_vec(0.3);
    for (int d = 0; d < kLatent; ++d) {
      double s = 0.0;
      for (auto a : chosen) s += attr_vec[a][d];
      item_vec[i][d] = s / static_cast<double>(chosen.size()) + noise[d];
    }
  }

  std::ostringstream inter, trip;
  inter << "# synthetic interactions seed=" << spec.seed << "\n";
  trip << "# synthetic triplets seed=" << spec.seed << "\n";
  for (std::size_t i = 0; i < spec.n_items; ++i)
    for (auto a : item_attrs[i]) trip << 'i' << i << '\t' << kAttributeRelation << "\ta" << a << '\n';

  constexpr double kSharpness = 8.0;
  std::vector<double> logits(spec.n_items);
  for (std::size_t u = 0; u < spec.n_users; ++u) {
    // A user likes two or three attributes, mostly from one or two categories.
    std::array<double, kLatent> pref{};
    std::size_t n_fav_cats = unit(rng) < 0.5 ? 1 : 2;
    std::vector<std::size_t> fav_cats;
    for (std::size_t f = 0; f < n_fav_cats; ++f) fav_cats.push_back(pick_cat(rng));
    std::size_t n_liked = unit(rng) < 0.5 ? 2 : 3;
    for (std::size_t f = 0; f < n_liked; ++f) {
      const auto& own = cat_attrs[fav_cats[f % fav_cats.size()]];
      std::uniform_int_distribution<std::size_t> pick_own(0, own.size() - 1);
      const auto& v = attr_vec[own[pick_own(rng)]];
      for (int d = 0; d < kLatent; ++d) pref[d] += v[d] / static_cast<double>(n_liked);
    }
    auto noise = random_vec(0.3);
    for (int d = 0; d < kLatent; ++d) pref[d] += noise[d];
    double pn = 0.0;
    for (double x : pref) pn += x * x;
    pn = std::sqrt(pn) + 1e-12;
    for (std::size_t i = 0; i < spec.n_items; ++i) {
      double dot = 0.0, in = 0.0;
      for (int d = 0; d < kLatent; ++d) {
        dot += pref[d] * item_vec[i][d];
        in += item_vec[i][d] * item_vec[i][d];
      }
      logits[i] = kSharpness * dot / (pn * (std::sqrt(in) + 1e-12));
    }
    // Gumbel top-k: sampling without replacement proportional to exp(logit).
    std::vector<std::pair<double, std::size_t>> keyed(spec.n_items);
    for (std::size_t i = 0; i < spec.n_items; ++i) {
      double g = -std::log(-std::log(std::max(unit(rng), 1e-300)));
      keyed[i] = {logits[i] + g, i};
    }
    std::partial_sort(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(spec.interactions_per_user),
                      keyed.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
    std::vector<std::size_t> picked;
    for (std::size_t k = 0; k < spec.interactions_per_user; ++k) picked.push_back(keyed[k].second);
    std::sort(picked.begin(), picked.end());
    for (auto i : picked) inter << 'u' << u << "\ti" << i << '\n';
  }
  return {inter.str(), trip.str()};
}

inline void write_synthetic(const SyntheticFiles& files, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "interactions.tsv", std::ios::binary) << files.interactions;
  std::ofstream(dir / "triplets.tsv", std::ios::binary) << files.triplets;
}

inline Dataset load_dataset(const SyntheticFiles& files) {
  std::istringstream fi(files.interactions), ft(files.triplets);
  return load_dataset(fi, ft);
}

}  // namespace kgcrs
