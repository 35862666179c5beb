// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "kgcrs/active_sampler.hpp"
#include "kgcrs/dataset.hpp"
#include "kgcrs/error.hpp"
#include "kgcrs/fm.hpp"
#include "kgcrs/graph.hpp"
#include "kgcrs/interaction_policy.hpp"
#include "kgcrs/negative_sampler.hpp"
#include "kgcrs/simulator.hpp"

namespace kgcrs {

enum class AskStrategy { active, max_score, max_entropy };
enum class NegStrategy { sampler, uniform };
enum class ActStrategy { policy, always_rec };

struct Variant {
  std::string name = "full";
  AskStrategy ask = AskStrategy::active;
  NegStrategy neg = NegStrategy::sampler;
  ActStrategy act = ActStrategy::policy;

  static std::vector<std::string> names() {
    return {"full", "no_active", "no_negative", "no_samplers", "abs_greedy", "max_entropy"};
  }

  static Variant named(std::string_view n) {
    if (n == "full") return {"full", AskStrategy::active, NegStrategy::sampler, ActStrategy::policy};
    if (n == "no_active") return {"no_active", AskStrategy::max_score, NegStrategy::sampler, ActStrategy::policy};
    if (n == "no_negative") return {"no_negative", AskStrategy::active, NegStrategy::uniform, ActStrategy::policy};
    if (n == "no_samplers") return {"no_samplers", AskStrategy::max_score, NegStrategy::uniform, ActStrategy::policy};
    if (n == "abs_greedy") return {"abs_greedy", AskStrategy::max_score, NegStrategy::uniform, ActStrategy::always_rec};
    if (n == "max_entropy") return {"max_entropy", AskStrategy::max_entropy, NegStrategy::uniform, ActStrategy::policy};
    fail(ErrorCode::config, "unknown variant '" + std::string(n) + "'");
  }

  bool uses_active() const { return ask == AskStrategy::active; }
  bool uses_negative() const { return neg == NegStrategy::sampler; }
  bool uses_policy() const { return act == ActStrategy::policy; }
};

struct SessionConfig {
  int max_turns = 15;
  std::size_t top_k = 10;
  std::size_t neg_batch = 10;
  int online_steps = 1;
  double online_lr = 0.05;
  bool exclude_candidates = true;  // keep surviving candidates out of the negative pool
  bool candidate_state = true;     // active-state degree and links over surviving candidates
  bool local_pool = false;         // pool limited to attributes sharing an item with the seed attribute
  RewardTable rewards = RewardTable::cpr();
  Variant variant;
  double epsilon = 0.0;
};

// Shared read-only models; each session copies `fm` before updating it.
struct SessionModels {
  const HeteroGraph* graph = nullptr;
  const FmModel* fm = nullptr;
  const AttributeAdjacency* adjacency = nullptr;
  const PositiveIndex* positives = nullptr;
  const ActivePolicy* active = nullptr;
  const NegativePolicy* negative = nullptr;
  const QNet* qnet = nullptr;

  void require(const Variant& v) const {
    if (!graph || !fm || !adjacency || !positives) fail(ErrorCode::precondition, "session models are incomplete");
    if (v.uses_active() && !active) fail(ErrorCode::precondition, "variant needs the active sampler");
    if (v.uses_negative() && !negative) fail(ErrorCode::precondition, "variant needs the negative sampler");
    if (v.uses_policy() && !qnet) fail(ErrorCode::precondition, "variant needs the interaction policy");
  }
};

enum class SessionStatus { active, success, max_turn_fail, aborted };

inline const char* to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::active: return "active";
    case SessionStatus::success: return "success";
    case SessionStatus::max_turn_fail: return "max_turn_fail";
    case SessionStatus::aborted: return "aborted";
  }
  return "unknown";
}

inline SessionStatus parse_status(std::string_view s) {
  for (auto v : {SessionStatus::active, SessionStatus::success, SessionStatus::max_turn_fail, SessionStatus::aborted})
    if (s == to_string(v)) return v;
  fail(ErrorCode::load, "unknown session status '" + std::string(s) + "'");
}

struct UpdateSummary {
  double attr_loss = 0.0;
  double item_loss = 0.0;
  std::size_t attr_triples = 0;
  std::size_t item_triples = 0;
};

struct Prompt {
  int turn = 0;
  Action action = Action::ask;
  NodeId attribute = 0;       // ask
  std::vector<NodeId> items;  // rec
};

struct TurnRecord {
  int turn = 0;
  Action action = Action::ask;
  std::optional<NodeId> attribute;
  std::vector<NodeId> items;
  Response response = Response::reject;
  RewardEvent event = RewardEvent::ask_fail;
  double reward = 0.0;
  std::size_t candidates = 0;  // after the turn
  std::vector<NodeId> negatives;
  UpdateSummary update;
};

// Maps a finished turn to its state_his slot.
inline TurnOutcome outcome_of(const TurnRecord& r) {
  if (r.action == Action::ask) return r.response == Response::accept ? TurnOutcome::ask_accept : TurnOutcome::ask_reject;
  return TurnOutcome::rec_reject;
}

// Attribute of maximal binary entropy of its frequency among `candidates`; ties by ascending id.
inline NodeId max_entropy_attribute(const HeteroGraph& g, std::span<const NodeId> candidates,
                                    std::span<const NodeId> pool) {
  if (pool.empty()) fail(ErrorCode::contract, "no attribute available to ask");
  std::unordered_map<NodeId, std::size_t> freq;
  for (auto c : candidates)
    for (auto p : g.attributes_of(c)) ++freq[p];
  NodeId best = pool.front();
  double best_h = -1.0;
  for (auto p : pool) {
    auto it = freq.find(p);
    double f = candidates.empty() || it == freq.end() ? 0.0
                                                       : static_cast<double>(it->second) / static_cast<double>(candidates.size());
    double h = (f <= 0.0 || f >= 1.0) ? 0.0 : -(f * std::log(f) + (1.0 - f) * std::log(1.0 - f));
    if (h > best_h || (h == best_h && p < best)) {
      best_h = h;
      best = p;
    }
  }
  return best;
}

inline NodeId max_score_attribute(const FmModel& fm, const PreferenceContext& ctx, std::span<const NodeId> pool) {
  if (pool.empty()) fail(ErrorCode::contract, "no attribute available to ask");
  NodeId best = pool.front();
  double best_s = -INFINITY;
  for (auto p : pool) {
    double s = score_attribute(fm, ctx, p);
    if (s > best_s || (s == best_s && p < best)) {
      best_s = s;
      best = p;
    }
  }
  return best;
}

// One conversation. Call prompt() to get the system's move, then respond()
// with the user's answer; each respond() advances exactly one turn.
class Session {
 public:
  Session(const SessionModels& models, const SessionConfig& cfg, std::string id, std::optional<NodeId> user,
          std::optional<NodeId> seed_attr, std::uint64_t seed)
      : m_(models), cfg_(cfg), id_(std::move(id)), seed_(seed), rng_(seed), fm_(models.fm ? *models.fm : FmModel{}) {
    m_.require(cfg.variant);
    if (cfg.max_turns < 1) fail(ErrorCode::parameter, "max_turns must be >= 1");
    if (cfg.top_k < 1) fail(ErrorCode::parameter, "top_k must be >= 1");
    const auto& g = *m_.graph;
    if (user && g.contains(*user) && g.kind(*user) == NodeKind::user && fm_.has(*user)) {
      user_ = *user;
      auto it = m_.positives->find(user_);
      if (it != m_.positives->end()) positives_ = it->second;
    } else {
      user_ = static_cast<NodeId>(g.size());
      anonymous_ = true;
      fm_.add_row(user_);
    }
    ctx_.user = user_;
    auto attrs = g.attributes();
    if (seed_attr) {
      g.require_kind(*seed_attr, NodeKind::attribute);
      seed_attr_ = seed_attr;
      ctx_.add(*seed_attr);
      auto items = g.items_with(*seed_attr);
      candidates_.assign(items.begin(), items.end());
    } else {
      auto items = g.items();
      candidates_.assign(items.begin(), items.end());
    }
    std::vector<NodeId> labelled;
    if (seed_attr) labelled.push_back(*seed_attr);
    pool_ = AttributePool::all_except(attrs, labelled);
    if (cfg_.local_pool && seed_attr && m_.adjacency)
      std::erase_if(pool_.remaining, [&](NodeId a) { return !m_.adjacency->linked(*seed_attr, a); });
    initial_candidates_ = candidates_.size();
    if (candidates_.empty()) abort("no candidate items");
  }

  const std::string& id() const noexcept { return id_; }
  NodeId user() const noexcept { return user_; }
  bool anonymous() const noexcept { return anonymous_; }
  std::optional<NodeId> seed_attribute() const noexcept { return seed_attr_; }
  std::uint64_t seed() const noexcept { return seed_; }
  SessionStatus status() const noexcept { return status_; }
  bool finished() const noexcept { return status_ != SessionStatus::active; }
  int turn() const noexcept { return turn_; }
  const std::string& diagnostic() const noexcept { return diagnostic_; }
  const std::vector<NodeId>& accepted() const noexcept { return ctx_.attrs; }
  const std::vector<NodeId>& rejected() const noexcept { return rejected_attrs_; }
  const std::vector<NodeId>& rejected_items() const noexcept { return rejected_items_; }
  const std::vector<NodeId>& candidates() const noexcept { return candidates_; }
  const AttributePool& pool() const noexcept { return pool_; }
  const std::unordered_set<NodeId>& consumed() const noexcept { return consumed_; }
  const std::vector<TurnRecord>& turns() const noexcept { return turns_; }
  const std::vector<Transition>& transitions() const noexcept { return transitions_; }
  const FmModel& fm() const noexcept { return fm_; }
  const SessionConfig& config() const noexcept { return cfg_; }
  const std::optional<Prompt>& pending() const noexcept { return pending_; }

  Eigen::VectorXd policy_state() const {
    std::vector<TurnOutcome> hist;
    for (const auto& r : turns_) hist.push_back(outcome_of(r));
    return encode_state(hist, turn_, cfg_.max_turns, candidates_.size(), m_.graph->items().size());
  }

  // Training positive best matching the accepted attributes; ties by FM score then id.
  std::optional<NodeId> anchor() const {
    if (positives_.empty()) return std::nullopt;
    std::optional<NodeId> best;
    std::size_t best_hits = 0;
    double best_score = -INFINITY;
    std::vector<NodeId> sorted(positives_.begin(), positives_.end());
    std::sort(sorted.begin(), sorted.end());
    for (auto i : sorted) {
      auto attrs = m_.graph->attributes_of(i);
      std::size_t hits = 0;
      for (auto p : ctx_.attrs) hits += std::binary_search(attrs.begin(), attrs.end(), p) ? 1 : 0;
      double s = score_item(fm_, ctx_, i);
      if (!best || hits > best_hits || (hits == best_hits && s > best_score)) {
        best = i;
        best_hits = hits;
        best_score = s;
      }
    }
    return best;
  }

  const Prompt& prompt() {
    if (finished()) fail(ErrorCode::gone, "session " + id_ + " has ended");
    if (pending_) return *pending_;
    Prompt p;
    p.turn = turn_;
    state_before_ = policy_state();
    p.action = choose();
    if (p.action == Action::ask) {
      p.attribute = pick_attribute();
    } else {
      p.items = rank_items(fm_, ctx_, candidates_, cfg_.top_k);
    }
    pending_ = std::move(p);
    return *pending_;
  }

  const TurnRecord& respond(Response r) {
    if (finished()) fail(ErrorCode::gone, "session " + id_ + " has ended");
    if (!pending_) fail(ErrorCode::conflict, "no pending prompt");
    Prompt p = std::move(*pending_);
    pending_.reset();
    TurnRecord rec;
    rec.turn = turn_;
    rec.action = p.action;
    rec.response = r;
    std::vector<NodeId> batch;
    if (p.action == Action::ask) {
      rec.attribute = p.attribute;
      pool_.remove(p.attribute);
      if (r == Response::accept) {
        ctx_.add(p.attribute);
        auto with = m_.graph->items_with(p.attribute);
        std::vector<NodeId> kept;
        std::set_intersection(candidates_.begin(), candidates_.end(), with.begin(), with.end(),
                              std::back_inserter(kept));
        candidates_ = std::move(kept);
        rec.event = RewardEvent::ask_suc;
      } else {
        rejected_attrs_.push_back(p.attribute);
        rec.event = RewardEvent::ask_fail;
      }
    } else {
      rec.items = p.items;
      if (r == Response::accept) {
        rec.event = RewardEvent::rec_suc;
        status_ = SessionStatus::success;
      } else {
        rec.event = RewardEvent::rec_fail;
        for (auto i : p.items) {
          auto it = std::lower_bound(candidates_.begin(), candidates_.end(), i);
          if (it != candidates_.end() && *it == i) candidates_.erase(it);
          rejected_items_.push_back(i);
          batch.push_back(i);
        }
      }
    }

    if (status_ == SessionStatus::active) {
      auto anchor_item = anchor();
      if (anchor_item) {
        auto sampled = negative_batch(*anchor_item);
        for (auto j : sampled) consumed_.insert(j);
        rec.negatives = sampled;
        batch.insert(batch.end(), sampled.begin(), sampled.end());
      }
      rec.update = online_update(anchor_item, batch);
    }

    rec.reward = reward_of(cfg_.rewards, rec.event);
    bool terminal = status_ == SessionStatus::success;
    if (!terminal && turn_ >= cfg_.max_turns) {
      status_ = SessionStatus::max_turn_fail;
      rec.reward = reward_of(cfg_.rewards, RewardEvent::reach_max_turn);
      terminal = true;
    }
    rec.candidates = candidates_.size();
    turns_.push_back(rec);
    if (!terminal && candidates_.empty()) {
      abort("candidate set is empty");
      terminal = true;
    }
    if (!terminal) ++turn_;
    transitions_.push_back({state_before_, rec.action, rec.reward, policy_state(), terminal});
    return turns_.back();
  }

  // Ends the session as aborted (timeouts, component failures).
  void abort(std::string why) {
    if (finished()) return;
    status_ = SessionStatus::aborted;
    diagnostic_ = std::move(why);
    pending_.reset();
  }

  nlohmann::json header_json() const {
    nlohmann::json h{{"type", "session"},      {"session", id_},
                     {"user", user_},          {"anonymous", anonymous_},
                     {"seed", seed_},          {"variant", cfg_.variant.name},
                     {"max_turns", cfg_.max_turns}, {"top_k", cfg_.top_k},
                     {"total_items", m_.graph->items().size()}};
    h["seed_attribute"] = seed_attr_ ? nlohmann::json(*seed_attr_) : nlohmann::json(nullptr);
    h["initial_candidates"] = initial_candidates_;
    return h;
  }

  nlohmann::json end_json() const {
    nlohmann::json e{{"type", "end"}, {"status", to_string(status_)}, {"turns", static_cast<int>(turns_.size())}};
    if (!diagnostic_.empty()) e["diagnostic"] = diagnostic_;
    return e;
  }

 private:
  Action choose() {
    if (pool_.empty()) return Action::rec;
    if (!seed_attr_ && ctx_.attrs.empty() && turns_.empty()) return Action::ask;
    if (cfg_.variant.act == ActStrategy::always_rec) return Action::rec;
    return choose_action(*m_.qnet, state_before_, cfg_.epsilon, rng_);
  }

  NodeId pick_attribute() {
    switch (cfg_.variant.ask) {
      case AskStrategy::active: {
        if (cfg_.candidate_state) {
          AttributeAdjacency local(*m_.graph, candidates_);
          auto state = build_active_state(*m_.graph, local, fm_, ctx_, pool_, kDegreeScale, DegreeSource::carriers);
          return select_attributes(*m_.active, state, 1, SelectMode::argmax, rng_).front();
        }
        auto state = build_active_state(*m_.graph, *m_.adjacency, fm_, ctx_, pool_);
        return select_attributes(*m_.active, state, 1, SelectMode::argmax, rng_).front();
      }
      case AskStrategy::max_score: return max_score_attribute(fm_, ctx_, pool_.remaining);
      case AskStrategy::max_entropy: return max_entropy_attribute(*m_.graph, candidates_, pool_.remaining);
    }
    fail(ErrorCode::contract, "unknown ask strategy");
  }

  std::vector<NodeId> negative_batch(NodeId anchor_item) {
    const auto& g = *m_.graph;
    if (cfg_.neg_batch == 0) return {};
    if (cfg_.variant.neg == NegStrategy::uniform) {
      auto pool = fallback_neg_pool(g, anchor_item, positives_, consumed_).items;
      return uniform_pick(pool);
    }
    ItemSet excluded = consumed_;
    if (cfg_.exclude_candidates) excluded.insert(candidates_.begin(), candidates_.end());
    auto pool = build_neg_pool(g, anchor_item, positives_, excluded);
    if (pool.items.empty()) return uniform_pick(fallback_neg_pool(g, anchor_item, positives_, excluded).items);
    auto w = score_neg_pool(*m_.negative, fm_, g, user_, anchor_item, pool.items);
    return select_neg_batch(pool.items, w, cfg_.neg_batch, SelectMode::argmax, rng_);
  }

  std::vector<NodeId> uniform_pick(std::vector<NodeId> pool) {
    std::size_t k = std::min(cfg_.neg_batch, pool.size());
    for (std::size_t j = 0; j < k; ++j) {
      std::uniform_int_distribution<std::size_t> d(j, pool.size() - 1);
      std::swap(pool[j], pool[d(rng_)]);
    }
    pool.resize(k);
    return pool;
  }

  UpdateSummary online_update(std::optional<NodeId> anchor_item, std::span<const NodeId> batch) {
    UpdateSummary u;
    std::vector<std::vector<NodeId>> contexts;
    std::vector<std::pair<NodeId, NodeId>> attr_pairs;
    for (auto pp : ctx_.attrs)
      for (auto pn : rejected_attrs_) attr_pairs.emplace_back(pp, pn);
    contexts.reserve(ctx_.attrs.size());
    for (auto pp : ctx_.attrs) {
      std::vector<NodeId> c;
      for (auto q : ctx_.attrs)
        if (q != pp) c.push_back(q);
      contexts.push_back(std::move(c));
    }
    std::vector<BprSample> attr_samples;
    for (const auto& [pp, pn] : attr_pairs) {
      auto k = static_cast<std::size_t>(std::find(ctx_.attrs.begin(), ctx_.attrs.end(), pp) - ctx_.attrs.begin());
      attr_samples.push_back({user_, pp, pn, contexts[k]});
    }
    std::vector<BprSample> item_samples;
    if (anchor_item)
      for (auto j : batch)
        if (j != *anchor_item) item_samples.push_back({user_, *anchor_item, j, ctx_.attrs});
    const double l2 = fm_.hyper().l2;
    for (int s = 0; s < cfg_.online_steps; ++s) {
      auto ra = bpr_step(fm_, attr_samples, cfg_.online_lr, l2);
      auto ri = bpr_step(fm_, item_samples, cfg_.online_lr, l2);
      if (s == 0) {
        u.attr_loss = ra.loss;
        u.item_loss = ri.loss;
      }
    }
    u.attr_triples = attr_samples.size();
    u.item_triples = item_samples.size();
    return u;
  }

  SessionModels m_;
  SessionConfig cfg_;
  std::string id_;
  std::uint64_t seed_;
  std::mt19937_64 rng_;
  FmModel fm_;
  NodeId user_ = 0;
  bool anonymous_ = false;
  std::optional<NodeId> seed_attr_;
  ItemSet positives_;
  PreferenceContext ctx_;
  std::vector<NodeId> rejected_attrs_;
  std::vector<NodeId> rejected_items_;
  std::vector<NodeId> candidates_;
  AttributePool pool_;
  ItemSet consumed_;
  int turn_ = 1;
  SessionStatus status_ = SessionStatus::active;
  std::string diagnostic_;
  std::optional<Prompt> pending_;
  Eigen::VectorXd state_before_;
  std::vector<TurnRecord> turns_;
  std::vector<Transition> transitions_;
  std::size_t initial_candidates_ = 0;
};

inline nlohmann::json turn_json(const TurnRecord& r) {
  nlohmann::json j{{"type", "turn"},         {"turn", r.turn},
                   {"action", to_string(r.action)}, {"response", to_string(r.response)},
                   {"event", to_string(r.event)},   {"reward", r.reward},
                   {"candidates", r.candidates},    {"negatives", r.negatives}};
  if (r.attribute) j["attribute"] = *r.attribute;
  if (r.action == Action::rec) j["items"] = r.items;
  j["update"] = {{"attr_loss", r.update.attr_loss},
                 {"item_loss", r.update.item_loss},
                 {"attr_triples", r.update.attr_triples},
                 {"item_triples", r.update.item_triples}};
  return j;
}

inline TurnRecord turn_from_json(const nlohmann::json& j) {
  TurnRecord r;
  r.turn = j.at("turn").get<int>();
  r.action = j.at("action").get<std::string>() == "ask" ? Action::ask : Action::rec;
  r.response = parse_response(j.at("response").get<std::string>());
  r.event = parse_reward_event(j.at("event").get<std::string>());
  r.reward = j.at("reward").get<double>();
  r.candidates = j.at("candidates").get<std::size_t>();
  r.negatives = j.at("negatives").get<std::vector<NodeId>>();
  if (j.contains("attribute")) r.attribute = j.at("attribute").get<NodeId>();
  if (j.contains("items")) r.items = j.at("items").get<std::vector<NodeId>>();
  const auto& u = j.at("update");
  r.update = {u.at("attr_loss").get<double>(), u.at("item_loss").get<double>(), u.at("attr_triples").get<std::size_t>(),
              u.at("item_triples").get<std::size_t>()};
  return r;
}

inline void write_transcript(std::ostream& out, const Session& s) {
  out << s.header_json().dump() << '\n';
  for (const auto& r : s.turns()) out << turn_json(r).dump() << '\n';
  if (s.finished()) out << s.end_json().dump() << '\n';
}

// Parsed transcript, enough for metrics and state replay.
struct Transcript {
  nlohmann::json header;
  std::vector<TurnRecord> turns;
  SessionStatus status = SessionStatus::active;
  int max_turns = 15;

  bool finished() const { return status != SessionStatus::active; }
  bool success() const { return status == SessionStatus::success; }
  int ended_at() const { return success() ? static_cast<int>(turns.size()) : max_turns; }
};

inline Transcript parse_transcript(std::istream& in) {
  Transcript t;
  std::string line;
  bool seen_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::load, std::string("malformed transcript line: ") + e.what());
    }
    auto type = j.value("type", "");
    if (type == "session") {
      t.header = j;
      t.max_turns = j.value("max_turns", 15);
      seen_header = true;
    } else if (type == "turn") {
      t.turns.push_back(turn_from_json(j));
    } else if (type == "end") {
      t.status = parse_status(j.at("status").get<std::string>());
    } else {
      fail(ErrorCode::load, "unknown transcript record type '" + type + "'");
    }
  }
  if (!seen_header) fail(ErrorCode::load, "transcript has no session header");
  return t;
}

inline Transcript to_transcript(const Session& s) {
  return {s.header_json(), s.turns(), s.status(), s.config().max_turns};
}

// state_his recomputed from a transcript after `k` turns.
inline Eigen::VectorXd replay_state(const Transcript& t, std::size_t k) {
  std::vector<TurnOutcome> hist;
  for (std::size_t j = 0; j < k && j < t.turns.size(); ++j) hist.push_back(outcome_of(t.turns[j]));
  std::size_t cands = k == 0 ? t.header.at("initial_candidates").get<std::size_t>() : t.turns[k - 1].candidates;
  return encode_state(hist, static_cast<int>(k) + 1, t.max_turns, cands, t.header.at("total_items").get<std::size_t>());
}

// Runs a simulated session to completion.
inline Session run_session(const SessionModels& models, const SessionConfig& cfg, const SimulatedUser& sim,
                           std::uint64_t seed, std::string id = "sim") {
  std::mt19937_64 seeder(seed);
  NodeId p0 = seed_attribute(sim, seeder);
  Session s(models, cfg, std::move(id), sim.user, p0, seeder());
  while (!s.finished()) {
    const auto& p = s.prompt();
    Response r = p.action == Action::ask ? respond_attribute(*models.graph, sim, p.attribute)
                                         : respond_recommendation(sim, p.items);
    s.respond(r);
  }
  return s;
}

}  // namespace kgcrs
