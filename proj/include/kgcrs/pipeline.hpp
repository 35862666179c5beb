// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "kgcrs/active_sampler.hpp"
#include "kgcrs/config.hpp"
#include "kgcrs/dataset.hpp"
#include "kgcrs/error.hpp"
#include "kgcrs/fm.hpp"
#include "kgcrs/interaction_policy.hpp"
#include "kgcrs/metrics.hpp"
#include "kgcrs/negative_sampler.hpp"
#include "kgcrs/session.hpp"
#include "kgcrs/simulator.hpp"

namespace kgcrs {

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view label, std::uint64_t index = 0) {
  std::uint64_t h = io::fnv1a(label, 14695981039346656037ull ^ (base * 0x9e3779b97f4a7c15ull));
  h ^= index + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  return h;
}

struct PipelineSettings {
  std::uint64_t seed = 1;
  std::string interactions_path, triplets_path;
  SyntheticSpec synthetic;
  int neg_per_pos = 4;
  FmHyper fm;
  FmTrainConfig fm_train;
  ActivePolicyConfig active;
  ActivePretrainConfig active_train;
  NegPolicyConfig negative;
  NegPretrainConfig negative_train;
  DqnConfig dqn;
  int policy_sessions = 300;
  SessionConfig session;
  std::size_t eval_sessions = 0;
  std::string fingerprint;

  bool synthetic_data() const { return interactions_path.empty(); }
};

inline PipelineSettings settings_from(RunConfig c, std::optional<std::uint64_t> seed_override = std::nullopt) {
  if (seed_override) c.set("run.seed", std::to_string(*seed_override));
  PipelineSettings s;
  s.seed = c.as<std::uint64_t>("run.seed");
  s.interactions_path = c.get("data.interactions");
  s.triplets_path = c.get("data.triplets");
  if (s.interactions_path.empty() != s.triplets_path.empty())
    fail(ErrorCode::config, "data.interactions and data.triplets must be given together");
  s.synthetic = {c.as<std::size_t>("data.users"), c.as<std::size_t>("data.items"), c.as<std::size_t>("data.attrs"),
                 c.as<std::size_t>("data.attrs_per_item"), c.as<std::size_t>("data.interactions_per_user"), s.seed};
  s.neg_per_pos = c.as<int>("data.neg_per_pos");

  s.fm.dim = c.as<int>("fm.dim");
  s.fm.lr = c.as<double>("fm.lr");
  s.fm.l2 = c.as<double>("fm.l2");
  s.fm.init_std = c.as<double>("fm.init_std");
  s.fm.seed = derive_seed(s.seed, "fm.init");
  s.fm_train = {c.as<int>("fm.epochs"), c.as<std::size_t>("fm.batch"), derive_seed(s.seed, "fm.train")};

  s.active = {c.as<int>("active.hidden"), c.as<double>("active.discount"), c.as<double>("active.init_std"),
              derive_seed(s.seed, "active.init")};
  s.active_train.episodes = c.as<int>("active.episodes");
  s.active_train.horizon = c.as<int>("active.horizon");
  s.active_train.k_ask = c.as<std::size_t>("active.k_ask");
  s.active_train.lr = c.as<double>("active.lr");
  s.active_train.fm_lr = c.as<double>("active.fm_lr");
  s.active_train.seed = derive_seed(s.seed, "active.train");

  s.negative.dim = s.fm.dim;
  s.negative.attn_hidden = c.as<int>("negative.attn_hidden");
  s.negative.discount = c.as<double>("negative.discount");
  s.negative.batch = c.as<std::size_t>("negative.batch");
  s.negative.init_std = c.as<double>("negative.init_std");
  s.negative.seed = derive_seed(s.seed, "negative.init");
  s.negative_train.episodes = c.as<int>("negative.episodes");
  s.negative_train.steps = c.as<int>("negative.steps");
  s.negative_train.lr = c.as<double>("negative.lr");
  s.negative_train.fm_lr = c.as<double>("negative.fm_lr");
  s.negative_train.normalize_reward = c.as<bool>("negative.normalize_reward");
  s.negative_train.seed = derive_seed(s.seed, "negative.train");

  s.dqn.hidden = c.as<int>("policy.hidden");
  s.dqn.discount = c.as<double>("policy.discount");
  s.dqn.eps_start = c.as<double>("policy.eps_start");
  s.dqn.eps_end = c.as<double>("policy.eps_end");
  s.dqn.capacity = c.as<std::size_t>("policy.capacity");
  s.dqn.batch = c.as<std::size_t>("policy.batch");
  s.dqn.target_sync = c.as<int>("policy.target_sync");
  s.dqn.lr = c.as<double>("policy.lr");
  s.dqn.seed = derive_seed(s.seed, "policy.init");
  s.policy_sessions = c.as<int>("policy.sessions");

  s.session.max_turns = c.as<int>("session.max_turns");
  s.session.top_k = c.as<std::size_t>("session.top_k");
  s.session.neg_batch = s.negative.batch;
  s.session.online_steps = c.as<int>("session.online_steps");
  s.session.online_lr = c.as<double>("session.online_lr");
  s.session.exclude_candidates = c.as<bool>("session.exclude_candidates");
  s.session.local_pool = c.as<bool>("session.local_pool");
  s.session.rewards = RewardTable::parse(c.get("policy.reward"));
  s.session.variant = Variant::named(c.get("session.variant"));
  s.eval_sessions = c.as<std::size_t>("eval.sessions");

  try {
    s.fm.validate();
  } catch (const Error& e) {
    fail(ErrorCode::config, e.what());
  }
  if (s.session.max_turns < 1 || s.session.top_k < 1) fail(ErrorCode::config, "session.max_turns and top_k must be >= 1");
  if (s.dqn.batch < 1 || s.dqn.target_sync < 1) fail(ErrorCode::config, "policy.batch and target_sync must be >= 1");
  s.fingerprint = c.fingerprint();
  return s;
}

// Dataset, split and everything derived from the training interactions.
class PreparedData {
 public:
  explicit PreparedData(const PipelineSettings& s)
      : data_(s.synthetic_data() ? load_dataset(generate_synthetic(s.synthetic))
                                 : load_dataset(s.interactions_path, s.triplets_path)),
        split_(split_dataset(data_.records, derive_seed(s.seed, "split"))),
        graph_(data_.graph_with(split_.train)),
        adjacency_(graph_),
        train_pos_(index_positives(split_.train)) {
    train_sets_ = build_pairwise_sets(split_.train, train_pos_, graph_, s.neg_per_pos, derive_seed(s.seed, "pairs.train"));
    std::vector<InteractionRecord> known = split_.train;
    known.insert(known.end(), split_.valid.begin(), split_.valid.end());
    valid_sets_ = build_pairwise_sets(split_.valid, index_positives(known), graph_, s.neg_per_pos,
                                      derive_seed(s.seed, "pairs.valid"));
  }

  const Dataset& data() const noexcept { return data_; }
  const DatasetSplit& split() const noexcept { return split_; }
  const HeteroGraph& graph() const noexcept { return graph_; }
  const AttributeAdjacency& adjacency() const noexcept { return adjacency_; }
  const PositiveIndex& train_positives() const noexcept { return train_pos_; }
  const PairwiseSets& train_sets() const noexcept { return train_sets_; }
  const PairwiseSets& valid_sets() const noexcept { return valid_sets_; }

 private:
  Dataset data_;
  DatasetSplit split_;
  HeteroGraph graph_;
  AttributeAdjacency adjacency_;
  PositiveIndex train_pos_;
  PairwiseSets train_sets_, valid_sets_;
};

// Stage 1.
inline FmModel train_fm(const PreparedData& d, const PipelineSettings& s, std::vector<FmEpochLog>* log = nullptr) {
  FmModel fm(d.graph(), s.fm);
  auto l = pretrain_fm(fm, d.graph(), d.train_sets(), s.fm_train);
  if (log) *log = std::move(l);
  return fm;
}

// Stage 2, active sampler: episodes come from the validation attribute pairs.
inline ActivePolicy train_active(const PreparedData& d, const FmModel& fm, const PipelineSettings& s,
                                 std::vector<ActiveEpisodeLog>* log = nullptr) {
  auto eps = make_active_episodes(d.graph(), d.valid_sets().attrs.empty() ? d.train_sets().attrs : d.valid_sets().attrs);
  ActivePolicy policy(s.active);
  auto l = pretrain_active(policy, d.graph(), fm, eps, s.active_train);
  if (log) *log = std::move(l);
  return policy;
}

// Stage 2, negative sampler.
inline NegativePolicy train_negative(const PreparedData& d, const FmModel& fm, const PipelineSettings& s,
                                     std::vector<NegEpisodeLog>* log = nullptr) {
  NegativePolicy policy(s.negative);
  auto l = pretrain_negative(policy, d.graph(), fm, d.train_sets().items, d.train_positives(), s.negative_train);
  if (log) *log = std::move(l);
  return policy;
}

inline SessionModels models_for(const PreparedData& d, const FmModel& fm, const ActivePolicy* active,
                                const NegativePolicy* negative, const QNet* qnet) {
  return {&d.graph(), &fm, &d.adjacency(), &d.train_positives(), active, negative, qnet};
}

struct PolicyLogEntry {
  int session;
  double epsilon;
  double ret;
  int turns;
  bool success;
  double loss;  // mean TD loss over the session's updates, 0 if none
};

// Stage 3: DQN trained on simulated sessions over the validation interactions.
inline QNet train_policy(const PreparedData& d, SessionModels models, const PipelineSettings& s, const Variant& variant,
                         std::vector<PolicyLogEntry>* log = nullptr) {
  SessionConfig cfg = s.session;
  cfg.variant = variant;
  DqnAgent agent(policy_state_dim(cfg.max_turns), s.dqn);
  if (!variant.uses_policy() || s.policy_sessions <= 0) return agent.online();
  auto cohort = make_cohort(d.graph(), d.split().valid.empty() ? d.split().train : d.split().valid);
  if (cohort.empty()) fail(ErrorCode::training, "no simulated users for policy training");
  std::mt19937_64 rng(derive_seed(s.seed, "policy.train"));
  std::uniform_int_distribution<std::size_t> pick(0, cohort.size() - 1);
  for (int k = 0; k < s.policy_sessions; ++k) {
    models.qnet = &agent.online();
    cfg.epsilon = agent.epsilon(k, s.policy_sessions);
    const auto& sim = cohort[pick(rng)];
    auto session = run_session(models, cfg, sim, rng(), "train-" + std::to_string(k));
    double ret = 0.0, loss = 0.0;
    int updates = 0;
    for (const auto& t : session.transitions()) {
      ret += t.reward;
      agent.remember(t);
      if (auto l = agent.update()) {
        loss += *l;
        ++updates;
      }
    }
    if (log)
      log->push_back({k, cfg.epsilon, ret, static_cast<int>(session.turns().size()),
                      session.status() == SessionStatus::success, updates ? loss / updates : 0.0});
  }
  return agent.online();
}

// Held-out test cohort; `limit` > 0 keeps a seeded subset of that size.
inline std::vector<SimulatedUser> eval_cohort(const PreparedData& d, std::uint64_t seed, std::size_t limit) {
  auto cohort = make_cohort(d.graph(), d.split().test);
  if (limit > 0 && limit < cohort.size()) {
    std::mt19937_64 rng(derive_seed(seed, "eval.subset"));
    std::shuffle(cohort.begin(), cohort.end(), rng);
    cohort.resize(limit);
  }
  return cohort;
}

inline std::vector<Transcript> evaluate(const PreparedData& d, const SessionModels& models, const PipelineSettings& s,
                                        const Variant& variant, std::span<const SimulatedUser> cohort,
                                        const std::function<void(const Session&)>& sink = {}) {
  SessionConfig cfg = s.session;
  cfg.variant = variant;
  cfg.epsilon = 0.0;
  std::vector<Transcript> out;
  out.reserve(cohort.size());
  for (std::size_t k = 0; k < cohort.size(); ++k) {
    auto session = run_session(models, cfg, cohort[k], derive_seed(s.seed, "eval.session", k), "eval-" + std::to_string(k));
    if (sink) sink(session);
    out.push_back(to_transcript(session));
  }
  (void)d;
  return out;
}

struct GridRow {
  std::string variant;
  std::string reward;
  std::uint64_t seed = 0;
  std::optional<MetricsReport> report;
  std::string error;
  double seconds = 0.0;
};

struct GridSummary {
  std::string variant;
  std::string reward;
  MeanStd sr15;  // SR at the turn cap
  MeanStd at;
  std::vector<double> sr_mean;
  std::vector<double> rec_ratio_mean;
  std::size_t runs = 0;
};

// Trains stages 1-3 per seed and evaluates each (variant, reward) pair. A
// failing row records its error; the grid continues.
inline std::vector<GridRow> run_grid(const RunConfig& base, std::span<const std::string> variants,
                                     std::span<const std::string> rewards, std::span<const std::uint64_t> seeds,
                                     const std::function<void(const GridRow&)>& progress = {}) {
  std::vector<GridRow> rows;
  for (auto seed : seeds) {
    std::optional<PipelineSettings> settings;
    std::optional<PreparedData> data;
    std::optional<FmModel> fm;
    std::optional<ActivePolicy> active;
    std::optional<NegativePolicy> negative;
    std::string setup_error;
    try {
      settings = settings_from(base, seed);
      data.emplace(*settings);
      fm = train_fm(*data, *settings);
      active = train_active(*data, *fm, *settings);
      negative = train_negative(*data, *fm, *settings);
    } catch (const std::exception& e) {
      setup_error = e.what();
    }
    for (const auto& reward : rewards)
      for (const auto& vname : variants) {
        GridRow row{vname, reward, seed, std::nullopt, setup_error, 0.0};
        auto t0 = std::chrono::steady_clock::now();
        if (setup_error.empty()) {
          try {
            auto s = *settings;
            RunConfig cfg = base;
            cfg.set("run.seed", std::to_string(seed));
            cfg.set("policy.reward", reward);
            cfg.set("session.variant", vname);
            s.session.rewards = RewardTable::parse(reward);
            s.fingerprint = cfg.fingerprint();
            auto variant = Variant::named(vname);
            auto models = models_for(*data, *fm, &*active, &*negative, nullptr);
            QNet q = train_policy(*data, models, s, variant);
            models.qnet = &q;
            auto cohort = eval_cohort(*data, seed, s.eval_sessions);
            auto transcripts = evaluate(*data, models, s, variant, cohort);
            row.report = compute_metrics(transcripts, s.session.max_turns, s.fingerprint, {seed});
          } catch (const std::exception& e) {
            row.error = e.what();
          }
        }
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (progress) progress(row);
        rows.push_back(std::move(row));
      }
  }
  return rows;
}

inline std::vector<GridSummary> summarize_grid(std::span<const GridRow> rows) {
  std::vector<GridSummary> out;
  for (const auto& r : rows) {
    if (!r.report) continue;
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const GridSummary& s) { return s.variant == r.variant && s.reward == r.reward; });
    if (it == out.end()) {
      out.push_back({r.variant, r.reward, {}, {}, {}, {}, 0});
      it = std::prev(out.end());
    }
  }
  for (auto& s : out) {
    std::vector<double> sr, at;
    for (const auto& r : rows) {
      if (!r.report || r.variant != s.variant || r.reward != s.reward) continue;
      sr.push_back(r.report->sr.back());
      at.push_back(r.report->at);
      if (s.sr_mean.empty()) {
        s.sr_mean.assign(r.report->sr.size(), 0.0);
        s.rec_ratio_mean.assign(r.report->rec_ratio.size(), 0.0);
      }
      for (std::size_t t = 0; t < s.sr_mean.size(); ++t) {
        s.sr_mean[t] += r.report->sr[t];
        s.rec_ratio_mean[t] += r.report->rec_ratio[t];
      }
    }
    s.runs = sr.size();
    for (auto& v : s.sr_mean) v /= static_cast<double>(s.runs);
    for (auto& v : s.rec_ratio_mean) v /= static_cast<double>(s.runs);
    s.sr15 = mean_std(sr);
    s.at = mean_std(at);
  }
  return out;
}

}  // namespace kgcrs
