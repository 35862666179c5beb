// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kgcrs/dataset.hpp"
#include "kgcrs/error.hpp"
#include "kgcrs/graph.hpp"
#include "kgcrs/io.hpp"

namespace kgcrs {

struct FmHyper {
  int dim = 64;
  double lr = 0.01;
  double l2 = 1e-4;
  std::uint64_t seed = 0;
  double init_std = 0.01;

  void validate() const {
    if (dim < 1) fail(ErrorCode::parameter, "fm dim must be >= 1");
    if (!(lr > 0.0)) fail(ErrorCode::parameter, "fm learning rate must be > 0");
    if (!(l2 >= 0.0)) fail(ErrorCode::parameter, "fm l2 must be >= 0");
  }
  friend bool operator==(const FmHyper&, const FmHyper&) = default;
};

// P_u for one user: accepted attributes in insertion order, no duplicates.
struct PreferenceContext {
  NodeId user = 0;
  std::vector<NodeId> attrs;

  bool add(NodeId p) {
    if (std::find(attrs.begin(), attrs.end(), p) != attrs.end()) return false;
    attrs.push_back(p);
    return true;
  }
};

using Embeddings = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowRef = Eigen::Ref<const Eigen::RowVectorXd>;

// One embedding row per User/Item/Attribute node of the graph it was built
// from. Extra user rows (e.g. anonymous sessions) can be appended later.
class FmModel {
 public:
  FmModel() = default;

  FmModel(const HeteroGraph& g, const FmHyper& hyper) : hyper_(hyper) {
    hyper_.validate();
    row_of_.assign(g.size(), -1);
    std::size_t rows = 0;
    for (NodeId n = 0; n < g.size(); ++n)
      if (g.kind(n) != NodeKind::entity) row_of_[n] = static_cast<std::int64_t>(rows++);
    emb_.resize(static_cast<Eigen::Index>(rows), hyper_.dim);
    std::mt19937_64 rng(hyper_.seed);
    std::normal_distribution<double> init(0.0, hyper_.init_std);
    for (Eigen::Index r = 0; r < emb_.rows(); ++r)
      for (Eigen::Index c = 0; c < emb_.cols(); ++c) emb_(r, c) = init(rng);
  }

  int dim() const noexcept { return hyper_.dim; }
  const FmHyper& hyper() const noexcept { return hyper_; }
  FmHyper& hyper() noexcept { return hyper_; }

  bool has(NodeId n) const noexcept { return n < row_of_.size() && row_of_[n] >= 0; }

  auto row(NodeId n) const { return emb_.row(index(n)); }
  auto row(NodeId n) { return emb_.row(index(n)); }

  // Appends a zero-initialised row for `n` (no-op if present).
  void add_row(NodeId n) {
    if (has(n)) return;
    if (n >= row_of_.size()) row_of_.resize(n + 1, -1);
    row_of_[n] = emb_.rows();
    emb_.conservativeResize(emb_.rows() + 1, Eigen::NoChange);
    emb_.row(emb_.rows() - 1).setZero();
  }

  std::vector<NodeId> ids() const {
    std::vector<NodeId> out;
    for (NodeId n = 0; n < row_of_.size(); ++n)
      if (row_of_[n] >= 0) out.push_back(n);
    return out;
  }

  const Embeddings& table() const noexcept { return emb_; }

  friend bool operator==(const FmModel& a, const FmModel& b) {
    if (!(a.hyper_ == b.hyper_) || a.ids() != b.ids()) return false;
    for (auto n : a.ids())
      if (a.row(n) != b.row(n)) return false;
    return true;
  }

 private:
  Eigen::Index index(NodeId n) const {
    if (!has(n)) fail(ErrorCode::not_found, "no embedding for node " + std::to_string(n));
    return static_cast<Eigen::Index>(row_of_[n]);
  }

  FmHyper hyper_;
  std::vector<std::int64_t> row_of_;
  Embeddings emb_;
};

namespace detail {

inline Eigen::RowVectorXd context_sum(const FmModel& m, std::span<const NodeId> attrs) {
  Eigen::RowVectorXd s = Eigen::RowVectorXd::Zero(m.dim());
  for (auto p : attrs) s += m.row(p);
  return s;
}

// -ln sigmoid(x) without overflow.
inline double neg_log_sigmoid(double x) { return x > 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x)); }

}  // namespace detail

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

// f(i | u, P_u) = u.i + sum_k i.p_k
inline double score_item(const FmModel& m, const PreferenceContext& ctx, NodeId item) {
  auto i = m.row(item);
  double s = m.row(ctx.user).dot(i);
  for (auto p : ctx.attrs) s += i.dot(m.row(p));
  return s;
}

// f(p | u, P_u) = u.p + sum_k p.p_k ; p in P_u contributes its own p.p term.
inline double score_attribute(const FmModel& m, const PreferenceContext& ctx, NodeId attr) {
  auto a = m.row(attr);
  double s = m.row(ctx.user).dot(a);
  for (auto p : ctx.attrs) s += a.dot(m.row(p));
  return s;
}

inline double attr_probability(const FmModel& m, const PreferenceContext& ctx, NodeId attr) {
  return sigmoid(score_attribute(m, ctx, attr));
}

// One pairwise sample: `pos` should outrank `neg` for `user` under `context`.
struct BprSample {
  NodeId user;
  NodeId pos;
  NodeId neg;
  std::span<const NodeId> context;
};

using SparseGrad = std::map<NodeId, Eigen::RowVectorXd>;

struct BprResult {
  double loss = 0.0;
  std::size_t samples = 0;
};

// Loss = sum -ln sigma(f(pos) - f(neg)) + l2 * sum over distinct touched rows ||row||^2.
inline double bpr_loss(const FmModel& m, std::span<const BprSample> batch, double l2) {
  double loss = 0.0;
  std::map<NodeId, bool> touched;
  for (const auto& s : batch) {
    Eigen::RowVectorXd diff = m.row(s.pos) - m.row(s.neg);
    double gap = m.row(s.user).dot(diff);
    for (auto p : s.context) gap += diff.dot(m.row(p));
    loss += detail::neg_log_sigmoid(gap);
    touched[s.user] = touched[s.pos] = touched[s.neg] = true;
    for (auto p : s.context) touched[p] = true;
  }
  if (l2 > 0.0)
    for (const auto& [n, _] : touched) loss += l2 * m.row(n).squaredNorm();
  return loss;
}

inline SparseGrad bpr_gradient(const FmModel& m, std::span<const BprSample> batch, double l2) {
  SparseGrad g;
  auto acc = [&](NodeId n, const Eigen::RowVectorXd& v) {
    auto [it, inserted] = g.try_emplace(n, v);
    if (!inserted) it->second += v;
  };
  for (const auto& s : batch) {
    Eigen::RowVectorXd diff = m.row(s.pos) - m.row(s.neg);
    Eigen::RowVectorXd ctx = detail::context_sum(m, s.context);
    double gap = m.row(s.user).dot(diff) + diff.dot(ctx);
    // d(-ln sigma(gap))/d gap
    double c = -(1.0 - sigmoid(gap));
    Eigen::RowVectorXd side = m.row(s.user) + ctx;
    acc(s.user, c * diff);
    acc(s.pos, c * side);
    acc(s.neg, -c * side);
    for (auto p : s.context) acc(p, c * diff);
  }
  if (l2 > 0.0)
    for (auto& [n, v] : g) v += 2.0 * l2 * m.row(n);
  return g;
}

// Plain SGD step on the batch; returns the pre-step loss.
inline BprResult bpr_step(FmModel& m, std::span<const BprSample> batch, double lr, double l2) {
  if (batch.empty()) return {};
  BprResult r{bpr_loss(m, batch, l2), batch.size()};
  auto g = bpr_gradient(m, batch, l2);
  for (const auto& [n, v] : g) m.row(n) -= lr * v;
  return r;
}

inline BprResult bpr_step_items(FmModel& m, const HeteroGraph& g, std::span<const BprSample> batch,
                                const FmHyper& hyper) {
  for (const auto& s : batch) {
    if (g.contains(s.pos)) g.require_kind(s.pos, NodeKind::item);
    if (g.contains(s.neg)) g.require_kind(s.neg, NodeKind::item);
  }
  return bpr_step(m, batch, hyper.lr, hyper.l2);
}

inline BprResult bpr_step_attrs(FmModel& m, const HeteroGraph& g, std::span<const BprSample> batch,
                                const FmHyper& hyper) {
  for (const auto& s : batch) {
    if (g.contains(s.pos)) g.require_kind(s.pos, NodeKind::attribute);
    if (g.contains(s.neg)) g.require_kind(s.neg, NodeKind::attribute);
  }
  return bpr_step(m, batch, hyper.lr, hyper.l2);
}

struct Scored {
  NodeId id;
  double score;
};

// Descending score, ties by ascending id; returns the first min(K, |candidates|).
inline std::vector<NodeId> rank_items(const FmModel& m, const PreferenceContext& ctx,
                                      std::span<const NodeId> candidates, std::size_t k) {
  if (candidates.empty()) fail(ErrorCode::contract, "rank_items called with no candidates");
  std::vector<Scored> s;
  s.reserve(candidates.size());
  for (auto i : candidates) s.push_back({i, score_item(m, ctx, i)});
  auto cmp = [](const Scored& a, const Scored& b) { return a.score != b.score ? a.score > b.score : a.id < b.id; };
  k = std::min(k, s.size());
  std::partial_sort(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(k), s.end(), cmp);
  std::vector<NodeId> out(k);
  for (std::size_t j = 0; j < k; ++j) out[j] = s[j].id;
  return out;
}

// Rank-based AUC with ties counted one half. The numerator is accumulated in
// doubled integer units so the result is exact.
inline double auc(std::span<const double> pos, std::span<const double> neg) {
  if (pos.empty() || neg.empty()) fail(ErrorCode::undefined_metric, "auc needs non-empty positive and negative sets");
  struct E {
    double s;
    bool positive;
  };
  std::vector<E> all;
  all.reserve(pos.size() + neg.size());
  for (double s : pos) all.push_back({s, true});
  for (double s : neg) all.push_back({s, false});
  std::sort(all.begin(), all.end(), [](const E& a, const E& b) { return a.s < b.s; });
  // twice the rank sum of positives, ranks starting at 1
  std::uint64_t rank2 = 0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    std::uint64_t npos = 0;
    while (j < all.size() && all[j].s == all[i].s) npos += all[j++].positive;
    // average rank of the tie block is (i+1 + j)/2
    rank2 += npos * static_cast<std::uint64_t>(i + 1 + j);
    i = j;
  }
  const std::uint64_t np = pos.size(), nn = neg.size();
  const std::uint64_t u2 = rank2 - np * (np + 1);
  return static_cast<double>(u2) / static_cast<double>(2 * np * nn);
}

inline double attribute_auc(const FmModel& m, const PreferenceContext& ctx, std::span<const NodeId> pos,
                            std::span<const NodeId> neg) {
  std::vector<double> sp, sn;
  for (auto p : pos) sp.push_back(score_attribute(m, ctx, p));
  for (auto p : neg) sn.push_back(score_attribute(m, ctx, p));
  return auc(sp, sn);
}

inline double item_auc(const FmModel& m, const PreferenceContext& ctx, std::span<const NodeId> pos,
                       std::span<const NodeId> neg) {
  std::vector<double> sp, sn;
  for (auto i : pos) sp.push_back(score_item(m, ctx, i));
  for (auto i : neg) sn.push_back(score_item(m, ctx, i));
  return auc(sp, sn);
}

struct FmTrainConfig {
  int epochs = 30;
  std::size_t batch = 64;
  std::uint64_t seed = 0;
};

struct FmEpochLog {
  int epoch;
  double item_loss;
  double attr_loss;
};

// Offline BPR over O_I and O_A. Item triples are scored under a random
// non-empty subset of P_{i+}; attribute triples under P_{source} \ {p+}.
inline std::vector<FmEpochLog> pretrain_fm(FmModel& m, const HeteroGraph& g, const PairwiseSets& sets,
                                           const FmTrainConfig& cfg) {
  if (sets.items.empty() && sets.attrs.empty()) fail(ErrorCode::training, "empty pairwise training sets");
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order_i(sets.items.size()), order_a(sets.attrs.size());
  std::iota(order_i.begin(), order_i.end(), 0);
  std::iota(order_a.begin(), order_a.end(), 0);
  std::vector<FmEpochLog> log;
  std::vector<std::vector<NodeId>> ctx_store;
  std::vector<BprSample> batch;
  for (int e = 0; e < cfg.epochs; ++e) {
    std::shuffle(order_i.begin(), order_i.end(), rng);
    std::shuffle(order_a.begin(), order_a.end(), rng);
    FmEpochLog entry{e, 0.0, 0.0};
    for (std::size_t start = 0; start < order_i.size(); start += cfg.batch) {
      std::size_t end = std::min(order_i.size(), start + cfg.batch);
      ctx_store.assign(end - start, {});
      batch.clear();
      for (std::size_t k = start; k < end; ++k) {
        const auto& t = sets.items[order_i[k]];
        auto attrs = g.attributes_of(t.pos);
        auto& ctx = ctx_store[k - start];
        ctx.assign(attrs.begin(), attrs.end());
        if (!ctx.empty()) {
          std::shuffle(ctx.begin(), ctx.end(), rng);
          std::uniform_int_distribution<std::size_t> keep(1, ctx.size());
          ctx.resize(keep(rng));
        }
        batch.push_back({t.user, t.pos, t.neg, ctx});
      }
      entry.item_loss += bpr_step(m, batch, m.hyper().lr, m.hyper().l2).loss;
    }
    for (std::size_t start = 0; start < order_a.size(); start += cfg.batch) {
      std::size_t end = std::min(order_a.size(), start + cfg.batch);
      ctx_store.assign(end - start, {});
      batch.clear();
      for (std::size_t k = start; k < end; ++k) {
        const auto& t = sets.attrs[order_a[k]];
        auto& ctx = ctx_store[k - start];
        for (auto p : g.attributes_of(t.source_item))
          if (p != t.pos) ctx.push_back(p);
        if (!ctx.empty()) {
          std::shuffle(ctx.begin(), ctx.end(), rng);
          std::uniform_int_distribution<std::size_t> keep(0, ctx.size());
          ctx.resize(keep(rng));
        }
        batch.push_back({t.user, t.pos, t.neg, ctx});
      }
      entry.attr_loss += bpr_step(m, batch, m.hyper().lr, m.hyper().l2).loss;
    }
    log.push_back(entry);
  }
  return log;
}

inline void save_fm(std::ostream& out, const FmModel& m, const std::string& fingerprint) {
  const auto& h = m.hyper();
  out << "kgcrs-fm 1\n";
  out << "fingerprint " << fingerprint << '\n';
  out << "hyper " << h.dim << ' ' << io::format_double(h.lr) << ' ' << io::format_double(h.l2) << ' ' << h.seed
      << ' ' << io::format_double(h.init_std) << '\n';
  auto ids = m.ids();
  out << "rows " << ids.size() << '\n';
  for (auto n : ids) {
    out << n;
    auto r = m.row(n);
    for (Eigen::Index c = 0; c < r.size(); ++c) out << ' ' << io::format_double(r(c));
    out << '\n';
  }
}

struct FmCheckpoint {
  FmModel model;
  std::string fingerprint;
};

inline FmCheckpoint load_fm(std::istream& in) {
  std::string line;
  auto magic = io::expect_line(in, line, "kgcrs-fm");
  if (magic.size() != 2 || magic[1] != "1") fail(ErrorCode::load, "unsupported fm checkpoint version");
  auto fp = io::expect_line(in, line, "fingerprint");
  FmCheckpoint ck;
  ck.fingerprint = fp.size() > 1 ? std::string(fp[1]) : "";
  auto h = io::expect_line(in, line, "hyper");
  if (h.size() != 6) fail(ErrorCode::load, "bad fm hyper line");
  FmHyper hyper;
  hyper.dim = io::parse_int<int>(h[1]);
  hyper.lr = io::parse_double(h[2]);
  hyper.l2 = io::parse_double(h[3]);
  hyper.seed = io::parse_int<std::uint64_t>(h[4]);
  hyper.init_std = io::parse_double(h[5]);
  hyper.validate();
  auto rows = io::parse_int<std::size_t>(io::expect_line(in, line, "rows").at(1));
  HeteroGraph empty;
  ck.model = FmModel(empty, hyper);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!std::getline(in, line)) fail(ErrorCode::load, "truncated fm checkpoint");
    auto f = io::split_ws(line);
    if (f.size() != static_cast<std::size_t>(hyper.dim) + 1) fail(ErrorCode::load, "bad fm row width");
    NodeId n = io::parse_int<NodeId>(f[0]);
    ck.model.add_row(n);
    auto row = ck.model.row(n);
    for (int c = 0; c < hyper.dim; ++c) row(c) = io::parse_double(f[static_cast<std::size_t>(c) + 1]);
  }
  return ck;
}

}  // namespace kgcrs
