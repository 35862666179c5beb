// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <random>
#include <span>
#include <vector>

#include "kgcrs/dataset.hpp"
#include "kgcrs/error.hpp"
#include "kgcrs/graph.hpp"

namespace kgcrs {

enum class Response { accept, reject };

inline const char* to_string(Response r) { return r == Response::accept ? "accept" : "reject"; }

inline Response parse_response(std::string_view s) {
  if (s == "accept") return Response::accept;
  if (s == "reject") return Response::reject;
  fail(ErrorCode::contract, "response must be 'accept' or 'reject'");
}

// Rule-based user holding a target item: accepts exactly the target's
// attributes and any list containing the target.
struct SimulatedUser {
  NodeId user = 0;
  NodeId target = 0;
  std::vector<NodeId> target_attrs;  // ascending
};

inline SimulatedUser make_simulated_user(const HeteroGraph& g, NodeId user, NodeId target) {
  g.require_kind(user, NodeKind::user);
  g.require_kind(target, NodeKind::item);
  auto attrs = g.attributes_of(target);
  return {user, target, {attrs.begin(), attrs.end()}};
}

inline Response respond_attribute(const HeteroGraph& g, const SimulatedUser& sim, NodeId attr) {
  g.require_kind(attr, NodeKind::attribute);
  return std::binary_search(sim.target_attrs.begin(), sim.target_attrs.end(), attr) ? Response::accept
                                                                                     : Response::reject;
}

inline Response respond_recommendation(const SimulatedUser& sim, std::span<const NodeId> items) {
  if (items.empty()) fail(ErrorCode::contract, "recommendation list is empty");
  return std::find(items.begin(), items.end(), sim.target) != items.end() ? Response::accept : Response::reject;
}

// The attribute the user volunteers before the first turn.
inline NodeId seed_attribute(const SimulatedUser& sim, std::mt19937_64& rng) {
  if (sim.target_attrs.empty()) fail(ErrorCode::precondition, "target item has no attributes");
  std::uniform_int_distribution<std::size_t> pick(0, sim.target_attrs.size() - 1);
  return sim.target_attrs[pick(rng)];
}

// One simulated user per held-out interaction.
inline std::vector<SimulatedUser> make_cohort(const HeteroGraph& g, std::span<const InteractionRecord> held_out) {
  std::vector<SimulatedUser> out;
  out.reserve(held_out.size());
  for (const auto& r : held_out) {
    auto sim = make_simulated_user(g, r.user, r.item);
    if (!sim.target_attrs.empty()) out.push_back(std::move(sim));
  }
  return out;
}

}  // namespace kgcrs
