// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "kgcrs/error.hpp"

namespace kgcrs {

using NodeId = std::uint32_t;

enum class NodeKind : std::uint8_t { user, item, attribute, entity };
enum class EdgeKind : std::uint8_t { interact, has_attribute, external };

constexpr const char* to_string(NodeKind k) noexcept {
  switch (k) {
    case NodeKind::user: return "user";
    case NodeKind::item: return "item";
    case NodeKind::attribute: return "attribute";
    case NodeKind::entity: return "entity";
  }
  return "?";
}

constexpr const char* to_string(EdgeKind k) noexcept {
  switch (k) {
    case EdgeKind::interact: return "interact";
    case EdgeKind::has_attribute: return "has_attribute";
    case EdgeKind::external: return "external";
  }
  return "?";
}

struct NodeDescriptor {
  NodeId id;
  NodeKind kind;
};

struct EdgeDescriptor {
  NodeId a;
  NodeId b;
  EdgeKind kind;
  std::string label;  // relation label, kept for External edges
};

struct Adjacent {
  NodeId node;
  EdgeKind kind;
  friend bool operator==(const Adjacent&, const Adjacent&) = default;
  friend auto operator<=>(const Adjacent&, const Adjacent&) = default;
};

// Sealed heterogeneous graph. Edges are stored undirected in CSR form with
// every adjacency row sorted by (neighbor id, edge kind).
class HeteroGraph {
 public:
  HeteroGraph() = default;

  std::size_t size() const noexcept { return kinds_.size(); }
  std::size_t edge_count() const noexcept { return edge_count_; }

  bool contains(NodeId n) const noexcept { return n < kinds_.size(); }

  NodeKind kind(NodeId n) const {
    require(n);
    return kinds_[n];
  }

  std::size_t degree(NodeId n) const {
    require(n);
    return offsets_[n + 1] - offsets_[n];
  }

  std::span<const Adjacent> adjacency(NodeId n) const {
    require(n);
    return {adj_.data() + offsets_[n], offsets_[n + 1] - offsets_[n]};
  }

  std::vector<NodeId> neighbors(NodeId n, std::optional<EdgeKind> kind = std::nullopt) const {
    std::vector<NodeId> out;
    for (const auto& a : adjacency(n))
      if (!kind || a.kind == *kind) out.push_back(a.node);
    return out;
  }

  // P_i: sorted attribute ids attached to an item.
  std::span<const NodeId> attributes_of(NodeId item) const {
    require_kind(item, NodeKind::item);
    const auto& v = item_attrs_[item];
    return {v.data(), v.size()};
  }

  // Items carrying an attribute, ascending.
  std::span<const NodeId> items_with(NodeId attr) const {
    require_kind(attr, NodeKind::attribute);
    const auto& v = attr_items_[attr];
    return {v.data(), v.size()};
  }

  const std::vector<NodeId>& nodes_of(NodeKind k) const { return by_kind_[static_cast<int>(k)]; }
  const std::vector<NodeId>& users() const { return nodes_of(NodeKind::user); }
  const std::vector<NodeId>& items() const { return nodes_of(NodeKind::item); }
  const std::vector<NodeId>& attributes() const { return nodes_of(NodeKind::attribute); }

  // Items reachable from `item` through exactly one Attribute node, excluding `item`.
  std::vector<NodeId> two_hop_items(NodeId item) const {
    require_kind(item, NodeKind::item);
    std::vector<NodeId> out;
    for (const auto& mid : adjacency(item)) {
      if (kinds_[mid.node] != NodeKind::attribute) continue;
      for (const auto& end : adjacency(mid.node))
        if (kinds_[end.node] == NodeKind::item && end.node != item) out.push_back(end.node);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  void require_kind(NodeId n, NodeKind k) const {
    require(n);
    if (kinds_[n] != k)
      fail(ErrorCode::kind, "node " + std::to_string(n) + " is " + to_string(kinds_[n]) + ", expected " +
                                to_string(k));
  }

  friend bool operator==(const HeteroGraph&, const HeteroGraph&) = default;

 private:
  friend HeteroGraph load_graph(std::span<const NodeDescriptor>, std::span<const EdgeDescriptor>);

  void require(NodeId n) const {
    if (n >= kinds_.size()) fail(ErrorCode::not_found, "unknown node " + std::to_string(n));
  }

  std::vector<NodeKind> kinds_;
  std::vector<std::size_t> offsets_{0};
  std::vector<Adjacent> adj_;
  std::vector<std::vector<NodeId>> item_attrs_;
  std::vector<std::vector<NodeId>> attr_items_;
  std::array<std::vector<NodeId>, 4> by_kind_;
  std::size_t edge_count_ = 0;
};

namespace detail {

inline bool edge_kind_allowed(EdgeKind e, NodeKind a, NodeKind b) {
  auto pair_is = [&](NodeKind x, NodeKind y) { return (a == x && b == y) || (a == y && b == x); };
  switch (e) {
    case EdgeKind::interact: return pair_is(NodeKind::user, NodeKind::item);
    case EdgeKind::has_attribute: return pair_is(NodeKind::item, NodeKind::attribute);
    case EdgeKind::external:
      return a == NodeKind::entity || b == NodeKind::entity || a == NodeKind::attribute ||
             b == NodeKind::attribute;
  }
  return false;
}

}  // namespace detail

// Node ids must be exactly 0..N-1 (data-io performs the dense remapping).
// Identical (a, b, kind) edges are collapsed.
inline HeteroGraph load_graph(std::span<const NodeDescriptor> nodes, std::span<const EdgeDescriptor> edges) {
  HeteroGraph g;
  const std::size_t n = nodes.size();
  g.kinds_.assign(n, NodeKind::entity);
  std::vector<bool> seen(n, false);
  for (const auto& d : nodes) {
    if (d.id >= n || seen[d.id])
      fail(ErrorCode::load, "node ids must be dense and unique; offending id " + std::to_string(d.id));
    seen[d.id] = true;
    g.kinds_[d.id] = d.kind;
  }

  std::vector<std::tuple<NodeId, NodeId, EdgeKind>> list;
  list.reserve(edges.size());
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto& d = edges[e];
    if (d.a >= n || d.b >= n)
      fail(ErrorCode::load, "edge #" + std::to_string(e) + " (" + std::to_string(d.a) + " -" + d.label + "-> " +
                                std::to_string(d.b) + ") has a dangling endpoint");
    if (d.a == d.b) fail(ErrorCode::schema, "edge #" + std::to_string(e) + " is a self-loop");
    if (!detail::edge_kind_allowed(d.kind, g.kinds_[d.a], g.kinds_[d.b]))
      fail(ErrorCode::schema, "edge #" + std::to_string(e) + " of kind " + to_string(d.kind) + " connects " +
                                  to_string(g.kinds_[d.a]) + " and " + to_string(g.kinds_[d.b]));
    auto lo = std::min(d.a, d.b), hi = std::max(d.a, d.b);
    list.emplace_back(lo, hi, d.kind);
  }
  std::sort(list.begin(), list.end());
  list.erase(std::unique(list.begin(), list.end()), list.end());
  g.edge_count_ = list.size();

  std::vector<std::size_t> deg(n, 0);
  for (const auto& [a, b, k] : list) {
    ++deg[a];
    ++deg[b];
  }
  g.offsets_.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) g.offsets_[i + 1] = g.offsets_[i] + deg[i];
  g.adj_.resize(g.offsets_[n]);
  std::vector<std::size_t> cursor(g.offsets_.begin(), g.offsets_.end() - 1);
  for (const auto& [a, b, k] : list) {
    g.adj_[cursor[a]++] = {b, k};
    g.adj_[cursor[b]++] = {a, k};
  }
  for (std::size_t i = 0; i < n; ++i)
    std::sort(g.adj_.begin() + static_cast<std::ptrdiff_t>(g.offsets_[i]),
              g.adj_.begin() + static_cast<std::ptrdiff_t>(g.offsets_[i + 1]));

  g.item_attrs_.assign(n, {});
  g.attr_items_.assign(n, {});
  for (const auto& [a, b, k] : list) {
    if (k != EdgeKind::has_attribute) continue;
    NodeId item = g.kinds_[a] == NodeKind::item ? a : b;
    NodeId attr = item == a ? b : a;
    g.item_attrs_[item].push_back(attr);
    g.attr_items_[attr].push_back(item);
  }
  for (auto& v : g.item_attrs_) std::sort(v.begin(), v.end());
  for (auto& v : g.attr_items_) std::sort(v.begin(), v.end());
  for (NodeId i = 0; i < n; ++i) g.by_kind_[static_cast<int>(g.kinds_[i])].push_back(i);
  return g;
}

}  // namespace kgcrs
