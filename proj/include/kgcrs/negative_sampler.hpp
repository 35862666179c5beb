// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "kgcrs/dataset.hpp"
#include "kgcrs/error.hpp"
#include "kgcrs/fm.hpp"
#include "kgcrs/graph.hpp"
#include "kgcrs/io.hpp"
#include "kgcrs/nn.hpp"

namespace kgcrs {

using ItemSet = std::unordered_set<NodeId>;

// Pool_{i-}: two-hop items of the anchor that are neither positives nor consumed.
struct NegPool {
  NodeId anchor = 0;
  std::vector<NodeId> items;  // ascending
  bool fallback = false;      // two-hop pool was empty; `items` holds the uniform fallback set
};

inline NegPool build_neg_pool(const HeteroGraph& g, NodeId anchor, const ItemSet& positives, const ItemSet& consumed) {
  NegPool p{anchor, {}, false};
  for (auto i : g.two_hop_items(anchor))
    if (!positives.count(i) && !consumed.count(i)) p.items.push_back(i);
  return p;
}

// I \ I+(u) \ consumed, used when the two-hop pool is empty.
inline NegPool fallback_neg_pool(const HeteroGraph& g, NodeId anchor, const ItemSet& positives, const ItemSet& consumed) {
  NegPool p{anchor, {}, true};
  for (auto i : g.items())
    if (i != anchor && !positives.count(i) && !consumed.count(i)) p.items.push_back(i);
  return p;
}

struct NegPolicyConfig {
  int dim = 64;          // must match the FM embedding size
  int attn_hidden = 16;
  double discount = 0.95;  // lambda_NS
  std::size_t batch = 10;  // B
  double init_std = 0.1;
  std::uint64_t seed = 0;
};

// Candidate encoder plus two-layer attention scorer:
//   h_j = relu(e_j W_self + m_j W_nbr + b)      m_j = mean of bridging attribute embeddings
//   z_j = [h_j * e_u, h_j * e_{i+}]
//   s_j = tanh(z_j A + c) v + v0
// Weights are softmax(s) over the pool.
class NegativePolicy {
 public:
  NegativePolicy() : NegativePolicy(NegPolicyConfig{}) {}

  explicit NegativePolicy(const NegPolicyConfig& cfg) : cfg_(cfg) {
    const int d = cfg.dim, h = cfg.attn_hidden;
    std::mt19937_64 rng(cfg.seed);
    w_self_ = Eigen::MatrixXd::Identity(d, d);
    Eigen::MatrixXd noise(d, d);
    nn::fill_normal(noise, cfg.init_std, rng);
    w_self_ += noise;
    w_nbr_ = Eigen::MatrixXd(d, d);
    nn::fill_normal(w_nbr_, cfg.init_std, rng);
    bias_ = Eigen::MatrixXd::Zero(1, d);
    attn_ = Eigen::MatrixXd(2 * d, h);
    nn::fill_normal(attn_, cfg.init_std, rng);
    attn_bias_ = Eigen::MatrixXd::Zero(1, h);
    out_ = Eigen::MatrixXd(h, 1);
    nn::fill_normal(out_, cfg.init_std, rng);
    out_bias_ = Eigen::MatrixXd::Zero(1, 1);
  }

  const NegPolicyConfig& config() const noexcept { return cfg_; }
  double discount() const noexcept { return cfg_.discount; }

  nn::ParamList params() { return {&w_self_, &w_nbr_, &bias_, &attn_, &attn_bias_, &out_, &out_bias_}; }
  std::vector<const Eigen::MatrixXd*> params() const {
    return {&w_self_, &w_nbr_, &bias_, &attn_, &attn_bias_, &out_, &out_bias_};
  }

  void set_zero() {
    for (auto* p : params()) p->setZero();
  }

  struct Inputs {
    Eigen::MatrixXd e;    // candidate embeddings (n x d)
    Eigen::MatrixXd m;    // neighbour means (n x d)
    Eigen::RowVectorXd u, pos;
  };

  struct Cache {
    Eigen::MatrixXd pre, h, z, act;
  };

  static Inputs gather(const FmModel& fm, const HeteroGraph& g, NodeId user, NodeId anchor,
                       std::span<const NodeId> pool) {
    const auto n = static_cast<Eigen::Index>(pool.size());
    const int d = fm.dim();
    Inputs in{Eigen::MatrixXd(n, d), Eigen::MatrixXd::Zero(n, d), fm.row(user), fm.row(anchor)};
    auto anchor_attrs = g.attributes_of(anchor);
    for (Eigen::Index k = 0; k < n; ++k) {
      NodeId j = pool[static_cast<std::size_t>(k)];
      in.e.row(k) = fm.row(j);
      int shared = 0;
      for (auto p : g.attributes_of(j))
        if (std::binary_search(anchor_attrs.begin(), anchor_attrs.end(), p)) {
          in.m.row(k) += fm.row(p);
          ++shared;
        }
      if (shared > 0) in.m.row(k) /= shared;
    }
    return in;
  }

  Eigen::VectorXd scores(const Inputs& in, Cache* cache = nullptr) const {
    const int d = cfg_.dim;
    Eigen::MatrixXd pre = in.e * w_self_ + in.m * w_nbr_;
    pre.rowwise() += bias_.row(0);
    Eigen::MatrixXd h = nn::relu(pre);
    Eigen::MatrixXd z(h.rows(), 2 * d);
    z.leftCols(d) = h.array().rowwise() * in.u.array();
    z.rightCols(d) = h.array().rowwise() * in.pos.array();
    Eigen::MatrixXd q = z * attn_;
    q.rowwise() += attn_bias_.row(0);
    Eigen::MatrixXd act = q.array().tanh().matrix();
    Eigen::VectorXd s = act * out_;
    s.array() += out_bias_(0, 0);
    if (cache) *cache = {std::move(pre), std::move(h), std::move(z), std::move(act)};
    return s;
  }

  nn::GradList backward(const Inputs& in, const Cache& c, const Eigen::VectorXd& ds) const {
    const int d = cfg_.dim;
    nn::GradList g(7);
    g[5] = c.act.transpose() * ds;
    g[6] = Eigen::MatrixXd::Constant(1, 1, ds.sum());
    Eigen::MatrixXd dact = ds * out_.transpose();
    Eigen::MatrixXd dq = dact.cwiseProduct((1.0 - c.act.array().square()).matrix());
    g[3] = c.z.transpose() * dq;
    g[4] = dq.colwise().sum();
    Eigen::MatrixXd dz = dq * attn_.transpose();
    Eigen::MatrixXd dh = (dz.leftCols(d).array().rowwise() * in.u.array()).matrix() +
                         (dz.rightCols(d).array().rowwise() * in.pos.array()).matrix();
    Eigen::MatrixXd dpre = dh.cwiseProduct(nn::relu_mask(c.pre));
    g[0] = in.e.transpose() * dpre;
    g[1] = in.m.transpose() * dpre;
    g[2] = dpre.colwise().sum();
    return g;
  }

  nn::GradList logprob_grad(const Inputs& in, std::span<const Eigen::Index> chosen) const {
    Cache c;
    Eigen::VectorXd s = scores(in, &c);
    return backward(in, c, nn::sequential_logprob_grad(s, chosen));
  }

  void save(std::ostream& out, const std::string& fingerprint) const {
    out << "kgcrs-negative-policy 1\nfingerprint " << fingerprint << "\n";
    out << "config " << cfg_.dim << ' ' << cfg_.attn_hidden << ' ' << io::format_double(cfg_.discount) << ' '
        << cfg_.batch << ' ' << io::format_double(cfg_.init_std) << ' ' << cfg_.seed << '\n';
    auto ps = params();
    for (std::size_t k = 0; k < ps.size(); ++k) io::write_matrix(out, kNames[k], *ps[k]);
  }

  static NegativePolicy load(std::istream& in, std::string* fingerprint = nullptr) {
    std::string line;
    auto magic = io::expect_line(in, line, "kgcrs-negative-policy");
    if (magic.size() != 2 || magic[1] != "1") fail(ErrorCode::load, "unsupported negative policy version");
    auto fp = io::expect_line(in, line, "fingerprint");
    if (fingerprint) *fingerprint = fp.size() > 1 ? std::string(fp[1]) : "";
    auto c = io::expect_line(in, line, "config");
    if (c.size() != 7) fail(ErrorCode::load, "bad negative policy config line");
    NegPolicyConfig cfg;
    cfg.dim = io::parse_int<int>(c[1]);
    cfg.attn_hidden = io::parse_int<int>(c[2]);
    cfg.discount = io::parse_double(c[3]);
    cfg.batch = io::parse_int<std::size_t>(c[4]);
    cfg.init_std = io::parse_double(c[5]);
    cfg.seed = io::parse_int<std::uint64_t>(c[6]);
    NegativePolicy p(cfg);
    auto ps = p.params();
    for (std::size_t k = 0; k < ps.size(); ++k) {
      auto m = io::read_matrix(in, kNames[k]);
      if (m.rows() != ps[k]->rows() || m.cols() != ps[k]->cols()) fail(ErrorCode::load, "negative policy shape mismatch");
      *ps[k] = m;
    }
    return p;
  }

  friend bool operator==(const NegativePolicy& a, const NegativePolicy& b) {
    auto pa = a.params(), pb = b.params();
    for (std::size_t k = 0; k < pa.size(); ++k)
      if (*pa[k] != *pb[k]) return false;
    return a.cfg_.dim == b.cfg_.dim && a.cfg_.batch == b.cfg_.batch;
  }

 private:
  static constexpr const char* kNames[] = {"w_self", "w_nbr", "bias", "attn", "attn_bias", "out", "out_bias"};

  NegPolicyConfig cfg_;
  Eigen::MatrixXd w_self_, w_nbr_, bias_, attn_, attn_bias_, out_, out_bias_;
};

inline Eigen::VectorXd score_neg_pool(const NegativePolicy& policy, const FmModel& fm, const HeteroGraph& g,
                                      NodeId user, NodeId anchor, std::span<const NodeId> pool) {
  if (pool.empty()) fail(ErrorCode::contract, "negative pool is empty");
  return nn::softmax(policy.scores(NegativePolicy::gather(fm, g, user, anchor, pool)));
}

// Top-B by weight (argmax) or weighted sampling without replacement (sample).
inline std::vector<NodeId> select_neg_batch(std::span<const NodeId> pool, const Eigen::VectorXd& weights,
                                            std::size_t batch, SelectMode mode, std::mt19937_64& rng) {
  std::vector<Eigen::Index> picks;
  if (mode == SelectMode::argmax) {
    picks = nn::top_k<NodeId>(weights, pool, batch);
  } else {
    Eigen::VectorXd logits = weights.array().max(1e-300).log().matrix();
    picks = nn::sample_sequential(logits, batch, rng);
  }
  std::vector<NodeId> out;
  for (auto k : picks) out.push_back(pool[static_cast<std::size_t>(k)]);
  return out;
}

// Mean over the batch of e_j.e_u + e_j.e_{i+}; with `normalize`, cosine similarities instead.
inline double negative_reward(const FmModel& fm, NodeId user, NodeId anchor, std::span<const NodeId> batch,
                              bool normalize = false) {
  if (batch.empty()) return 0.0;
  auto u = fm.row(user);
  auto p = fm.row(anchor);
  double total = 0.0;
  for (auto j : batch) {
    auto e = fm.row(j);
    if (normalize) {
      auto cos = [](const auto& a, const auto& b) {
        double den = a.norm() * b.norm();
        return den > 0.0 ? a.dot(b) / den : 0.0;
      };
      total += cos(e, u) + cos(e, p);
    } else {
      total += e.dot(u) + e.dot(p);
    }
  }
  return total / static_cast<double>(batch.size());
}

struct NegStep {
  NegativePolicy::Inputs inputs;
  std::vector<Eigen::Index> chosen;
};

struct NegTrajectory {
  std::vector<NodeId> path;  // u -> i+ -> ... visited anchors
  std::vector<NegStep> steps;
  std::vector<std::vector<NodeId>> batches;
  std::vector<double> rewards;
};

inline nn::GradList reinforce_gradient(const NegativePolicy& policy, const NegTrajectory& traj,
                                       std::span<const double> baseline = {}) {
  auto ps = policy.params();
  nn::GradList total;
  for (auto* p : ps) total.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
  std::vector<double> g(traj.rewards.size());
  double acc = 0.0;
  for (std::size_t t = traj.rewards.size(); t-- > 0;) g[t] = acc = traj.rewards[t] + policy.discount() * acc;
  double weight = 1.0;
  for (std::size_t t = 0; t < traj.steps.size(); ++t) {
    double adv = g[t] - (t < baseline.size() ? baseline[t] : 0.0);
    if (weight != 0.0 && adv != 0.0)
      nn::add_scaled(total, policy.logprob_grad(traj.steps[t].inputs, traj.steps[t].chosen), weight * adv);
    weight *= policy.discount();
  }
  return total;
}

struct NegPretrainConfig {
  int episodes = 300;
  int steps = 2;  // hops; each i -> p -> i expansion covers two
  double lr = 0.005;
  double fm_lr = 0.05;
  double baseline_momentum = 0.9;
  bool normalize_reward = false;
  std::uint64_t seed = 0;
};

struct NegEpisodeLog {
  int episode;
  double ret;
  double mean_reward;
};

// Picks batch indices into the current pool.
using NegChooser = std::function<std::vector<Eigen::Index>(const NegativePolicy::Inputs&, std::span<const NodeId>)>;

// Rolls one episode from (u, i+) with batches supplied by `choose`, mutating `fm` (a scratch copy).
inline NegTrajectory rollout_negative_episode(const HeteroGraph& g, FmModel& fm, NodeId user, NodeId pos,
                                              const ItemSet& positives, const NegPretrainConfig& cfg,
                                              const NegChooser& choose) {
  NegTrajectory traj;
  traj.path = {user, pos};
  ItemSet consumed;
  std::vector<NodeId> pool;
  NodeId cursor = pos;
  FmHyper online = fm.hyper();
  online.lr = cfg.fm_lr;
  auto ctx_attrs = g.attributes_of(pos);
  const int expansions = (cfg.steps + 1) / 2;
  for (int s = 0; s < expansions; ++s) {
    for (auto i : build_neg_pool(g, cursor, positives, consumed).items)
      if (i != pos && std::find(pool.begin(), pool.end(), i) == pool.end()) pool.push_back(i);
    std::sort(pool.begin(), pool.end());
    if (pool.empty()) break;
    auto inputs = NegativePolicy::gather(fm, g, user, pos, pool);
    auto chosen = choose(inputs, pool);
    std::vector<NodeId> batch;
    for (auto k : chosen) batch.push_back(pool[static_cast<std::size_t>(k)]);
    double r = negative_reward(fm, user, pos, batch, cfg.normalize_reward);
    std::vector<BprSample> samples;
    for (auto j : batch) samples.push_back({user, pos, j, ctx_attrs});
    bpr_step_items(fm, g, samples, online);
    traj.steps.push_back({std::move(inputs), std::move(chosen)});
    traj.rewards.push_back(r);
    for (auto j : batch) {
      consumed.insert(j);
      pool.erase(std::find(pool.begin(), pool.end(), j));
    }
    cursor = batch.front();
    traj.path.push_back(cursor);
    traj.batches.push_back(std::move(batch));
  }
  return traj;
}

inline NegTrajectory rollout_negative_episode(const NegativePolicy& policy, const HeteroGraph& g, FmModel& fm,
                                              NodeId user, NodeId pos, const ItemSet& positives,
                                              const NegPretrainConfig& cfg, std::mt19937_64& rng) {
  return rollout_negative_episode(g, fm, user, pos, positives, cfg,
                                  [&](const NegativePolicy::Inputs& in, std::span<const NodeId>) {
                                    return nn::sample_sequential(policy.scores(in), policy.config().batch, rng);
                                  });
}

inline std::vector<NegEpisodeLog> pretrain_negative(NegativePolicy& policy, const HeteroGraph& g, const FmModel& fm,
                                                    std::span<const ItemTriple> triples, const PositiveIndex& positives,
                                                    const NegPretrainConfig& cfg) {
  if (triples.empty()) fail(ErrorCode::training, "negative pretraining needs a non-empty O_I");
  if (cfg.steps < 1) fail(ErrorCode::parameter, "steps must be >= 1");
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, triples.size() - 1);
  nn::Adam opt(cfg.lr);
  std::vector<double> baseline(static_cast<std::size_t>((cfg.steps + 1) / 2), 0.0);
  bool baseline_ready = false;
  static const ItemSet kNone;
  std::vector<NegEpisodeLog> log;
  for (int e = 0; e < cfg.episodes; ++e) {
    const auto& t = triples[pick(rng)];
    auto it = positives.find(t.user);
    const ItemSet& pos = it == positives.end() ? kNone : it->second;
    FmModel scratch = fm;
    auto traj = rollout_negative_episode(policy, g, scratch, t.user, t.pos, pos, cfg, rng);
    NegEpisodeLog entry{e, 0.0, 0.0};
    double w = 1.0;
    for (double r : traj.rewards) {
      entry.ret += w * r;
      entry.mean_reward += r / static_cast<double>(traj.rewards.size());
      w *= policy.discount();
    }
    if (!traj.steps.empty()) {
      auto grad = reinforce_gradient(policy, traj,
                                     baseline_ready ? std::span<const double>(baseline) : std::span<const double>{});
      for (auto& gk : grad) gk = -gk;
      opt.step(policy.params(), grad);
      std::vector<double> g_t(traj.rewards.size());
      double acc = 0.0;
      for (std::size_t k = traj.rewards.size(); k-- > 0;) g_t[k] = acc = traj.rewards[k] + policy.discount() * acc;
      for (std::size_t k = 0; k < g_t.size(); ++k)
        baseline[k] = baseline_ready ? cfg.baseline_momentum * baseline[k] + (1.0 - cfg.baseline_momentum) * g_t[k]
                                     : g_t[k];
      baseline_ready = true;
    }
    log.push_back(entry);
  }
  return log;
}

}  // namespace kgcrs
