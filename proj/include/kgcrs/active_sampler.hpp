// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <iterator>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "kgcrs/dataset.hpp"
#include "kgcrs/error.hpp"
#include "kgcrs/fm.hpp"
#include "kgcrs/graph.hpp"
#include "kgcrs/io.hpp"
#include "kgcrs/nn.hpp"

namespace kgcrs {

inline constexpr double kDegreeScale = 20.0;  // gamma
inline constexpr double kProbClamp = 1e-6;

// Binary entropy of a Bernoulli(y) prediction, natural log.
inline double binary_entropy(double y) {
  double e = 0.0;
  if (y > 0.0) e -= y * std::log(y);
  if (y < 1.0) e -= (1.0 - y) * std::log(1.0 - y);
  return e;
}

inline double bernoulli_kl(double a, double b) {
  a = std::clamp(a, kProbClamp, 1.0 - kProbClamp);
  b = std::clamp(b, kProbClamp, 1.0 - kProbClamp);
  return a * std::log(a / b) + (1.0 - a) * std::log((1.0 - a) / (1.0 - b));
}

inline double degree_feature(std::size_t degree, double gamma = kDegreeScale) {
  return std::min(static_cast<double>(degree) / gamma, 1.0);
}

// Attribute co-occurrence: two attributes are linked iff some item carries both.
class AttributeAdjacency {
 public:
  AttributeAdjacency() = default;

  explicit AttributeAdjacency(const HeteroGraph& g) : AttributeAdjacency(g, g.items()) {}

  // Links and carrier counts restricted to `items`.
  AttributeAdjacency(const HeteroGraph& g, std::span<const NodeId> items) : attrs_(g.attributes()) {
    for (std::size_t k = 0; k < attrs_.size(); ++k) local_[attrs_[k]] = k;
    const std::size_t n = attrs_.size();
    linked_.assign(n * n, false);
    carriers_.assign(n, 0);
    for (auto item : items) {
      auto ps = g.attributes_of(item);
      for (auto a : ps) {
        ++carriers_[local_.at(a)];
        for (auto b : ps)
          if (a != b) linked_[local_.at(a) * n + local_.at(b)] = true;
      }
    }
  }

  bool linked(NodeId a, NodeId b) const {
    const std::size_t n = attrs_.size();
    return linked_[local_.at(a) * n + local_.at(b)];
  }

  // Number of the indexed items carrying `a`.
  std::size_t carriers(NodeId a) const { return carriers_[local_.at(a)]; }

  const std::vector<NodeId>& attributes() const noexcept { return attrs_; }

 private:
  std::vector<NodeId> attrs_;
  std::unordered_map<NodeId, std::size_t> local_;
  std::vector<bool> linked_;
  std::vector<std::size_t> carriers_;
};

// Pool_{p*}: attributes still askable this session, plus the asked history.
struct AttributePool {
  std::vector<NodeId> remaining;  // ascending
  std::vector<NodeId> asked;      // in asking order

  static AttributePool all_except(std::span<const NodeId> attrs, std::span<const NodeId> labelled) {
    AttributePool p;
    for (auto a : attrs)
      if (std::find(labelled.begin(), labelled.end(), a) == labelled.end()) p.remaining.push_back(a);
    std::sort(p.remaining.begin(), p.remaining.end());
    p.asked.assign(labelled.begin(), labelled.end());
    return p;
  }

  bool contains(NodeId a) const { return std::binary_search(remaining.begin(), remaining.end(), a); }

  void remove(NodeId a) {
    auto it = std::lower_bound(remaining.begin(), remaining.end(), a);
    if (it == remaining.end() || *it != a) fail(ErrorCode::contract, "attribute " + std::to_string(a) + " not in pool");
    remaining.erase(it);
    asked.push_back(a);
  }

  bool empty() const noexcept { return remaining.empty(); }
  std::size_t size() const noexcept { return remaining.size(); }
};

// State over the attribute nodes the sampler can see: the pool plus already
// asked attributes (selected = 1). Only pool nodes are actions.
struct ActiveState {
  std::vector<NodeId> nodes;          // ascending
  std::vector<bool> actionable;       // node is in the pool
  Eigen::VectorXd probability;        // y_hat per node
  Eigen::VectorXd entropy;
  Eigen::VectorXd degree;
  Eigen::VectorXd kl;
  Eigen::VectorXd selected;
  std::vector<std::vector<int>> adj;  // state_adj as local indices
  Eigen::MatrixXd adj_norm;           // D^-1/2 A D^-1/2, no self loops

  static constexpr int kFeatures = 4;

  Eigen::MatrixXd features() const {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(nodes.size()), kFeatures);
    x.col(0) = entropy;
    x.col(1) = degree;
    x.col(2) = kl;
    x.col(3) = selected;
    return x;
  }

  std::vector<Eigen::Index> actions() const {
    std::vector<Eigen::Index> out;
    for (std::size_t k = 0; k < nodes.size(); ++k)
      if (actionable[k]) out.push_back(static_cast<Eigen::Index>(k));
    return out;
  }

  std::vector<NodeId> action_ids() const {
    std::vector<NodeId> out;
    for (std::size_t k = 0; k < nodes.size(); ++k)
      if (actionable[k]) out.push_back(nodes[k]);
    return out;
  }
};

// Where state_degree counts edges: the whole graph, or only the items the
// adjacency was built from (the session's surviving candidates).
enum class DegreeSource { graph, carriers };

inline ActiveState build_active_state(const HeteroGraph& g, const AttributeAdjacency& adjacency, const FmModel& fm,
                                      const PreferenceContext& ctx, const AttributePool& pool,
                                      double gamma = kDegreeScale, DegreeSource source = DegreeSource::graph) {
  if (pool.empty()) fail(ErrorCode::contract, "active state needs a non-empty pool");
  ActiveState s;
  s.nodes = pool.remaining;
  s.nodes.insert(s.nodes.end(), pool.asked.begin(), pool.asked.end());
  std::sort(s.nodes.begin(), s.nodes.end());
  s.nodes.erase(std::unique(s.nodes.begin(), s.nodes.end()), s.nodes.end());
  const auto n = static_cast<Eigen::Index>(s.nodes.size());
  s.actionable.resize(s.nodes.size());
  s.probability.resize(n);
  s.entropy.resize(n);
  s.degree.resize(n);
  s.kl.setZero(n);
  s.selected.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    NodeId p = s.nodes[static_cast<std::size_t>(k)];
    s.actionable[static_cast<std::size_t>(k)] = pool.contains(p);
    s.selected(k) = s.actionable[static_cast<std::size_t>(k)] ? 0.0 : 1.0;
    double y = attr_probability(fm, ctx, p);
    s.probability(k) = y;
    s.entropy(k) = binary_entropy(y);
    s.degree(k) = degree_feature(source == DegreeSource::graph ? g.degree(p) : adjacency.carriers(p), gamma);
  }
  s.adj.assign(s.nodes.size(), {});
  for (std::size_t a = 0; a < s.nodes.size(); ++a)
    for (std::size_t b = a + 1; b < s.nodes.size(); ++b)
      if (adjacency.linked(s.nodes[a], s.nodes[b])) {
        s.adj[a].push_back(static_cast<int>(b));
        s.adj[b].push_back(static_cast<int>(a));
      }
  s.adj_norm = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t a = 0; a < s.nodes.size(); ++a) {
    const auto& nb = s.adj[a];
    if (nb.empty()) continue;
    double sum = 0.0;
    for (int b : nb) {
      auto yb = s.probability(b), ya = s.probability(static_cast<Eigen::Index>(a));
      sum += bernoulli_kl(ya, yb) + bernoulli_kl(yb, ya);
      s.adj_norm(static_cast<Eigen::Index>(a), b) =
          1.0 / std::sqrt(static_cast<double>(nb.size()) * static_cast<double>(s.adj[static_cast<std::size_t>(b)].size()));
    }
    s.kl(static_cast<Eigen::Index>(a)) = sum / static_cast<double>(nb.size());
  }
  return s;
}

struct ActivePolicyConfig {
  int hidden = 16;
  double discount = 0.95;  // lambda_AS
  double init_std = 0.3;
  std::uint64_t seed = 0;
};

// One graph-convolution layer with a separate self transform, ReLU, then a
// linear head producing one logit per attribute node:
//   H = relu(X W_self + A_norm X W_nbr + b),  logits = H w + c
class ActivePolicy {
 public:
  ActivePolicy() : ActivePolicy(ActivePolicyConfig{}) {}

  explicit ActivePolicy(const ActivePolicyConfig& cfg) : cfg_(cfg) {
    const int f = ActiveState::kFeatures;
    w_self_ = Eigen::MatrixXd(f, cfg.hidden);
    w_nbr_ = Eigen::MatrixXd(f, cfg.hidden);
    bias_ = Eigen::MatrixXd::Zero(1, cfg.hidden);
    w_out_ = Eigen::MatrixXd(cfg.hidden, 1);
    b_out_ = Eigen::MatrixXd::Zero(1, 1);
    std::mt19937_64 rng(cfg.seed);
    nn::fill_normal(w_self_, cfg.init_std, rng);
    nn::fill_normal(w_nbr_, cfg.init_std, rng);
    nn::fill_normal(w_out_, cfg.init_std, rng);
  }

  const ActivePolicyConfig& config() const noexcept { return cfg_; }
  double discount() const noexcept { return cfg_.discount; }
  void set_discount(double d) { cfg_.discount = d; }

  nn::ParamList params() { return {&w_self_, &w_nbr_, &bias_, &w_out_, &b_out_}; }
  std::vector<const Eigen::MatrixXd*> params() const { return {&w_self_, &w_nbr_, &bias_, &w_out_, &b_out_}; }

  void set_zero() {
    for (auto* p : params()) p->setZero();
  }

  struct Cache {
    Eigen::MatrixXd x, ax, pre, h;
  };

  // Logits for every node of the state (actions and context nodes alike).
  Eigen::VectorXd logits(const ActiveState& s, Cache* cache = nullptr) const {
    Eigen::MatrixXd x = s.features();
    Eigen::MatrixXd ax = s.adj_norm * x;
    Eigen::MatrixXd pre = x * w_self_ + ax * w_nbr_;
    pre.rowwise() += bias_.row(0);
    Eigen::MatrixXd h = nn::relu(pre);
    Eigen::VectorXd out = h * w_out_;
    out.array() += b_out_(0, 0);
    if (cache) *cache = {std::move(x), std::move(ax), std::move(pre), std::move(h)};
    return out;
  }

  // Logits restricted to the pool, in action order.
  Eigen::VectorXd action_logits(const ActiveState& s, Cache* cache = nullptr) const {
    Eigen::VectorXd all = logits(s, cache);
    auto acts = s.actions();
    Eigen::VectorXd out(static_cast<Eigen::Index>(acts.size()));
    for (std::size_t k = 0; k < acts.size(); ++k) out(static_cast<Eigen::Index>(k)) = all(acts[k]);
    return out;
  }

  Eigen::VectorXd distribution(const ActiveState& s) const { return nn::softmax(action_logits(s)); }

  // Back-propagates d(objective)/d(action logits).
  nn::GradList backward(const ActiveState& s, const Cache& c, const Eigen::VectorXd& d_action_logits) const {
    auto acts = s.actions();
    Eigen::VectorXd d_all = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s.nodes.size()));
    for (std::size_t k = 0; k < acts.size(); ++k) d_all(acts[k]) = d_action_logits(static_cast<Eigen::Index>(k));
    nn::GradList g(5);
    g[3] = c.h.transpose() * d_all;
    g[4] = Eigen::MatrixXd::Constant(1, 1, d_all.sum());
    Eigen::MatrixXd dh = d_all * w_out_.transpose();
    Eigen::MatrixXd dpre = dh.cwiseProduct(nn::relu_mask(c.pre));
    g[0] = c.x.transpose() * dpre;
    g[1] = c.ax.transpose() * dpre;
    g[2] = dpre.colwise().sum();
    return g;
  }

  // Gradient of log P(chosen, in order) w.r.t. parameters.
  nn::GradList logprob_grad(const ActiveState& s, std::span<const NodeId> chosen) const {
    Cache c;
    Eigen::VectorXd lg = action_logits(s, &c);
    auto idx = to_action_indices(s, chosen);
    return backward(s, c, nn::sequential_logprob_grad(lg, idx));
  }

  double log_prob(const ActiveState& s, std::span<const NodeId> chosen) const {
    return nn::sequential_logprob(action_logits(s), to_action_indices(s, chosen));
  }

  void save(std::ostream& out, const std::string& fingerprint) const {
    out << "kgcrs-active-policy 1\nfingerprint " << fingerprint << "\n";
    out << "config " << cfg_.hidden << ' ' << io::format_double(cfg_.discount) << ' '
        << io::format_double(cfg_.init_std) << ' ' << cfg_.seed << '\n';
    const char* names[] = {"w_self", "w_nbr", "bias", "w_out", "b_out"};
    auto ps = params();
    for (std::size_t k = 0; k < ps.size(); ++k) io::write_matrix(out, names[k], *ps[k]);
  }

  static ActivePolicy load(std::istream& in, std::string* fingerprint = nullptr) {
    std::string line;
    auto magic = io::expect_line(in, line, "kgcrs-active-policy");
    if (magic.size() != 2 || magic[1] != "1") fail(ErrorCode::load, "unsupported active policy version");
    auto fp = io::expect_line(in, line, "fingerprint");
    if (fingerprint) *fingerprint = fp.size() > 1 ? std::string(fp[1]) : "";
    auto c = io::expect_line(in, line, "config");
    if (c.size() != 5) fail(ErrorCode::load, "bad active policy config line");
    ActivePolicyConfig cfg;
    cfg.hidden = io::parse_int<int>(c[1]);
    cfg.discount = io::parse_double(c[2]);
    cfg.init_std = io::parse_double(c[3]);
    cfg.seed = io::parse_int<std::uint64_t>(c[4]);
    ActivePolicy p(cfg);
    const char* names[] = {"w_self", "w_nbr", "bias", "w_out", "b_out"};
    auto ps = p.params();
    for (std::size_t k = 0; k < ps.size(); ++k) {
      auto m = io::read_matrix(in, names[k]);
      if (m.rows() != ps[k]->rows() || m.cols() != ps[k]->cols()) fail(ErrorCode::load, "active policy shape mismatch");
      *ps[k] = m;
    }
    return p;
  }

  friend bool operator==(const ActivePolicy& a, const ActivePolicy& b) {
    auto pa = a.params(), pb = b.params();
    for (std::size_t k = 0; k < pa.size(); ++k)
      if (*pa[k] != *pb[k]) return false;
    return a.cfg_.hidden == b.cfg_.hidden && a.cfg_.discount == b.cfg_.discount;
  }

 private:
  static std::vector<Eigen::Index> to_action_indices(const ActiveState& s, std::span<const NodeId> chosen) {
    auto ids = s.action_ids();
    std::vector<Eigen::Index> out;
    for (auto c : chosen) {
      auto it = std::find(ids.begin(), ids.end(), c);
      if (it == ids.end()) fail(ErrorCode::contract, "attribute " + std::to_string(c) + " is not an available action");
      out.push_back(it - ids.begin());
    }
    return out;
  }

  ActivePolicyConfig cfg_;
  Eigen::MatrixXd w_self_, w_nbr_, bias_, w_out_, b_out_;
};

// k_ask larger than the pool is truncated to the pool size.
inline std::vector<NodeId> select_attributes(const ActivePolicy& policy, const ActiveState& s, std::size_t k_ask,
                                             SelectMode mode, std::mt19937_64& rng) {
  auto ids = s.action_ids();
  if (ids.empty()) fail(ErrorCode::contract, "no attribute available to ask");
  if (k_ask < 1) fail(ErrorCode::contract, "k_ask must be >= 1");
  Eigen::VectorXd lg = policy.action_logits(s);
  std::vector<Eigen::Index> picks = mode == SelectMode::sample
                                        ? nn::sample_sequential(lg, k_ask, rng)
                                        : nn::top_k<NodeId>(lg, ids, k_ask);
  std::vector<NodeId> out;
  for (auto k : picks) out.push_back(ids[static_cast<std::size_t>(k)]);
  return out;
}

// Gain of the recommender's validation AUC between consecutive turns.
inline double active_reward(double auc_before, double auc_after) { return auc_after - auc_before; }

struct ActiveTrajectory {
  std::vector<ActiveState> states;
  std::vector<std::vector<NodeId>> actions;
  std::vector<double> rewards;
};

// Discounted returns-to-go G_t = sum_{k>=t} lambda^{k-t} r_k.
inline std::vector<double> returns_to_go(std::span<const double> rewards, double discount) {
  std::vector<double> g(rewards.size());
  double acc = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    acc = rewards[t] + discount * acc;
    g[t] = acc;
  }
  return g;
}

// Unbiased estimate of grad E[sum_t lambda^{t-1} r_t]:
//   sum_t lambda^{t-1} (G_t - b_t) grad log pi(a_t | s_t)
inline nn::GradList reinforce_gradient(const ActivePolicy& policy, const ActiveTrajectory& traj,
                                       std::span<const double> baseline = {}) {
  auto ps = policy.params();
  nn::GradList total;
  for (auto* p : ps) total.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
  auto g = returns_to_go(traj.rewards, policy.discount());
  double weight = 1.0;
  for (std::size_t t = 0; t < traj.states.size(); ++t) {
    double adv = g[t] - (t < baseline.size() ? baseline[t] : 0.0);
    if (weight != 0.0 && adv != 0.0) nn::add_scaled(total, policy.logprob_grad(traj.states[t], traj.actions[t]), weight * adv);
    weight *= policy.discount();
  }
  return total;
}

// Episode fixture for Stage-2 pretraining: a user, the attributes they accept
// (A+_u), the O_A pair used for the per-step FM updates, and an initial
// accepted attribute.
struct ActiveEpisode {
  NodeId user;
  std::vector<NodeId> accepted;  // A+_u, ascending
  NodeId pos;                    // p+ from the O_A triple
  NodeId neg;                    // p- from the O_A triple
  NodeId seed_attr;              // P+_u at t = 0
};

struct ActivePretrainConfig {
  int episodes = 200;
  int horizon = 15;  // T
  std::size_t k_ask = 1;
  double lr = 0.01;
  double fm_lr = 0.05;
  double baseline_momentum = 0.9;
  bool candidate_state = true;  // degree and links over items consistent with the accepted attributes
  std::uint64_t seed = 0;
};

struct ActiveEpisodeLog {
  int episode;
  double ret;  // sum_t lambda^{t-1} r_t
  std::vector<double> auc;
};

// Builds episodes from attribute triples; labels come from the source item's
// attributes, the seed attribute is the triple's p+.
inline std::vector<ActiveEpisode> make_active_episodes(const HeteroGraph& g, std::span<const AttrTriple> triples) {
  std::vector<ActiveEpisode> out;
  for (const auto& t : triples) {
    auto attrs = g.attributes_of(t.source_item);
    out.push_back({t.user, {attrs.begin(), attrs.end()}, t.pos, t.neg, t.pos});
  }
  return out;
}

namespace detail {

// AUC over the still-unlabelled attributes: accepted set vs the rest.
inline std::optional<double> pool_auc(const FmModel& fm, const PreferenceContext& ctx, const AttributePool& pool,
                                      std::span<const NodeId> accepted) {
  std::vector<NodeId> pos, neg;
  for (auto a : pool.remaining) (std::binary_search(accepted.begin(), accepted.end(), a) ? pos : neg).push_back(a);
  if (pos.empty() || neg.empty()) return std::nullopt;
  return attribute_auc(fm, ctx, pos, neg);
}

}  // namespace detail

// Rolls one episode, mutating `fm` (callers pass a scratch copy).
using ActiveChooser = std::function<std::vector<NodeId>(const ActiveState&)>;

// Rolls one episode with actions supplied by `choose`, mutating `fm` (a scratch copy).
inline ActiveTrajectory rollout_active_episode(const HeteroGraph& g, const AttributeAdjacency& adjacency, FmModel& fm,
                                               const ActiveEpisode& ep, const ActivePretrainConfig& cfg,
                                               const ActiveChooser& choose, std::vector<double>* auc_trace = nullptr) {
  ActiveTrajectory traj;
  PreferenceContext ctx{ep.user, {ep.seed_attr}};
  std::vector<NodeId> labelled{ep.seed_attr};
  auto pool = AttributePool::all_except(g.attributes(), labelled);
  FmHyper online = fm.hyper();
  online.lr = cfg.fm_lr;
  auto seed_items = g.items_with(ep.seed_attr);
  std::vector<NodeId> candidates(seed_items.begin(), seed_items.end());
  for (int t = 0; t < cfg.horizon && !pool.empty(); ++t) {
    auto state = cfg.candidate_state
                     ? build_active_state(g, AttributeAdjacency(g, candidates), fm, ctx, pool, kDegreeScale,
                                          DegreeSource::carriers)
                     : build_active_state(g, adjacency, fm, ctx, pool);
    auto chosen = choose(state);
    for (auto p : chosen) pool.remove(p);
    auto before = detail::pool_auc(fm, ctx, pool, ep.accepted);

    std::vector<std::vector<NodeId>> ctx_store;
    std::vector<BprSample> batch;
    ctx_store.reserve(chosen.size());
    for (auto p : chosen) {
      bool accept = std::binary_search(ep.accepted.begin(), ep.accepted.end(), p);
      auto& c = ctx_store.emplace_back(ctx.attrs);
      if (accept) {
        ctx.add(p);
        auto with = g.items_with(p);
        std::vector<NodeId> kept;
        std::set_intersection(candidates.begin(), candidates.end(), with.begin(), with.end(), std::back_inserter(kept));
        candidates = std::move(kept);
        if (p != ep.neg) batch.push_back({ep.user, p, ep.neg, c});
      } else if (p != ep.pos) {
        batch.push_back({ep.user, ep.pos, p, c});
      }
    }
    bpr_step_attrs(fm, g, batch, online);
    auto after = detail::pool_auc(fm, ctx, pool, ep.accepted);
    double r = before && after ? active_reward(*before, *after) : 0.0;
    if (auc_trace) auc_trace->push_back(after.value_or(before.value_or(0.5)));
    traj.states.push_back(std::move(state));
    traj.actions.push_back(std::move(chosen));
    traj.rewards.push_back(r);
  }
  return traj;
}

inline ActiveTrajectory rollout_active_episode(const ActivePolicy& policy, const HeteroGraph& g,
                                               const AttributeAdjacency& adjacency, FmModel& fm,
                                               const ActiveEpisode& ep, const ActivePretrainConfig& cfg,
                                               std::mt19937_64& rng, std::vector<double>* auc_trace = nullptr) {
  return rollout_active_episode(
      g, adjacency, fm, ep, cfg,
      [&](const ActiveState& s) { return select_attributes(policy, s, cfg.k_ask, SelectMode::sample, rng); }, auc_trace);
}

// REINFORCE with a per-step running-mean baseline. The FM is restored to the
// given snapshot before every episode.
inline std::vector<ActiveEpisodeLog> pretrain_active(ActivePolicy& policy, const HeteroGraph& g, const FmModel& fm,
                                                     std::span<const ActiveEpisode> episodes,
                                                     const ActivePretrainConfig& cfg) {
  if (episodes.empty()) fail(ErrorCode::training, "active pretraining needs a non-empty O_A");
  if (cfg.horizon < 1) fail(ErrorCode::parameter, "horizon must be >= 1");
  AttributeAdjacency adjacency(g);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, episodes.size() - 1);
  nn::Adam opt(cfg.lr);
  std::vector<double> baseline(static_cast<std::size_t>(cfg.horizon), 0.0);
  bool baseline_ready = false;
  std::vector<ActiveEpisodeLog> log;
  for (int e = 0; e < cfg.episodes; ++e) {
    const auto& ep = episodes[pick(rng)];
    FmModel scratch = fm;
    ActiveEpisodeLog entry{e, 0.0, {}};
    auto traj = rollout_active_episode(policy, g, adjacency, scratch, ep, cfg, rng, &entry.auc);
    double w = 1.0;
    for (double r : traj.rewards) {
      entry.ret += w * r;
      w *= policy.discount();
    }
    auto grad = reinforce_gradient(policy, traj, baseline_ready ? std::span<const double>(baseline) : std::span<const double>{});
    for (auto& gk : grad) gk = -gk;  // ascend
    opt.step(policy.params(), grad);
    auto g_t = returns_to_go(traj.rewards, policy.discount());
    for (std::size_t t = 0; t < g_t.size(); ++t)
      baseline[t] = baseline_ready ? cfg.baseline_momentum * baseline[t] + (1.0 - cfg.baseline_momentum) * g_t[t] : g_t[t];
    baseline_ready = true;
    log.push_back(std::move(entry));
  }
  return log;
}

}  // namespace kgcrs
