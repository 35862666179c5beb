// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <istream>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "kgcrs/error.hpp"
#include "kgcrs/io.hpp"
#include "kgcrs/nn.hpp"

namespace kgcrs {

enum class Action { ask, rec };

inline const char* to_string(Action a) { return a == Action::ask ? "ask" : "rec"; }

enum class RewardEvent { ask_suc, ask_fail, rec_suc, rec_fail, reach_max_turn };

inline const char* to_string(RewardEvent e) {
  switch (e) {
    case RewardEvent::ask_suc: return "ask_suc";
    case RewardEvent::ask_fail: return "ask_fail";
    case RewardEvent::rec_suc: return "rec_suc";
    case RewardEvent::rec_fail: return "rec_fail";
    case RewardEvent::reach_max_turn: return "reach_max_turn";
  }
  fail(ErrorCode::contract, "unknown reward event");
}

inline RewardEvent parse_reward_event(std::string_view s) {
  for (auto e : {RewardEvent::ask_suc, RewardEvent::ask_fail, RewardEvent::rec_suc, RewardEvent::rec_fail,
                 RewardEvent::reach_max_turn})
    if (s == to_string(e)) return e;
  fail(ErrorCode::contract, "unknown reward event '" + std::string(s) + "'");
}

struct RewardTable {
  double ask_suc = 0.01;
  double ask_fail = -0.1;
  double rec_suc = 1.0;
  double rec_fail = -0.1;
  double reach_max_turn = -0.3;

  static RewardTable cpr() { return {0.01, -0.1, 1.0, -0.1, -0.3}; }
  static RewardTable ask_more() { return {0.1, -0.1, 1.0, -1.0, -0.3}; }
  static RewardTable rec_more() { return {0.01, -0.1, 1.0, -0.01, -0.3}; }
  static RewardTable ear() { return {0.01 + 0.1, 0.01 + 0, 0.01 + 1, 0.01 + 0, -0.3}; }

  static std::vector<std::string> preset_names() { return {"R_CPR", "R_ask_more", "R_rec_more", "R_EAR"}; }

  static RewardTable preset(std::string_view name) {
    if (name == "R_CPR") return cpr();
    if (name == "R_ask_more") return ask_more();
    if (name == "R_rec_more") return rec_more();
    if (name == "R_EAR") return ear();
    fail(ErrorCode::config, "unknown reward preset '" + std::string(name) + "'");
  }

  // A preset name, or five comma-separated values in event order.
  static RewardTable parse(std::string_view text) {
    if (text.find(',') == std::string_view::npos) return preset(text);
    std::vector<double> v;
    std::size_t start = 0;
    while (start <= text.size()) {
      auto end = std::min(text.find(',', start), text.size());
      auto field = text.substr(start, end - start);
      while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
      while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
      try {
        v.push_back(io::parse_double(field));
      } catch (const Error&) {
        fail(ErrorCode::config, "bad reward value '" + std::string(field) + "'");
      }
      start = end + 1;
    }
    if (v.size() != 5) fail(ErrorCode::config, "inline reward table needs 5 values");
    RewardTable t{v[0], v[1], v[2], v[3], v[4]};
    for (double x : v)
      if (!std::isfinite(x)) fail(ErrorCode::config, "reward values must be finite");
    return t;
  }

  friend bool operator==(const RewardTable&, const RewardTable&) = default;
};

inline double reward_of(const RewardTable& t, RewardEvent e) {
  switch (e) {
    case RewardEvent::ask_suc: return t.ask_suc;
    case RewardEvent::ask_fail: return t.ask_fail;
    case RewardEvent::rec_suc: return t.rec_suc;
    case RewardEvent::rec_fail: return t.rec_fail;
    case RewardEvent::reach_max_turn: return t.reach_max_turn;
  }
  fail(ErrorCode::contract, "unknown reward event");
}

enum class TurnOutcome { ask_accept = 0, ask_reject = 1, rec_reject = 2 };
inline constexpr int kOutcomeSlots = 4;  // three outcomes plus "empty"

// state_his: one-hot outcome per turn slot, t/T, and ln(1+|C|)/ln(1+|I|).
inline Eigen::VectorXd encode_state(std::span<const TurnOutcome> history, int turn, int max_turns,
                                    std::size_t candidates, std::size_t total_items) {
  if (max_turns < 1) fail(ErrorCode::parameter, "max_turns must be >= 1");
  const int slots = max_turns;
  Eigen::VectorXd s = Eigen::VectorXd::Zero(kOutcomeSlots * slots + 2);
  for (int k = 0; k < slots; ++k) {
    int hot = k < static_cast<int>(history.size()) ? static_cast<int>(history[static_cast<std::size_t>(k)]) : 3;
    s(kOutcomeSlots * k + hot) = 1.0;
  }
  s(kOutcomeSlots * slots) = std::clamp(static_cast<double>(turn) / max_turns, 0.0, 1.0);
  double denom = std::log1p(static_cast<double>(std::max<std::size_t>(total_items, 1)));
  s(kOutcomeSlots * slots + 1) = std::clamp(std::log1p(static_cast<double>(candidates)) / denom, 0.0, 1.0);
  return s;
}

inline int policy_state_dim(int max_turns) { return kOutcomeSlots * max_turns + 2; }

// state -> relu(hidden) -> (Q_ask, Q_rec)
class QNet {
 public:
  QNet() = default;
  QNet(int input, int hidden, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    w1_ = Eigen::MatrixXd(input, hidden);
    nn::fill_normal(w1_, std::sqrt(2.0 / input), rng);
    b1_ = Eigen::MatrixXd::Zero(1, hidden);
    w2_ = Eigen::MatrixXd(hidden, 2);
    nn::fill_normal(w2_, std::sqrt(1.0 / hidden), rng);
    b2_ = Eigen::MatrixXd::Zero(1, 2);
  }

  int input_dim() const noexcept { return static_cast<int>(w1_.rows()); }
  int hidden_dim() const noexcept { return static_cast<int>(w1_.cols()); }

  nn::ParamList params() { return {&w1_, &b1_, &w2_, &b2_}; }
  std::vector<const Eigen::MatrixXd*> params() const { return {&w1_, &b1_, &w2_, &b2_}; }

  // Rows of `x` are states; returns rows x 2.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Eigen::MatrixXd* pre = nullptr) const {
    if (x.cols() != w1_.rows()) fail(ErrorCode::contract, "state dimension mismatch");
    Eigen::MatrixXd p = x * w1_;
    p.rowwise() += b1_.row(0);
    Eigen::MatrixXd out = nn::relu(p) * w2_;
    out.rowwise() += b2_.row(0);
    if (pre) *pre = std::move(p);
    return out;
  }

  Eigen::Vector2d q_values(const Eigen::VectorXd& state) const {
    Eigen::MatrixXd out = forward(state.transpose());
    return {out(0, 0), out(0, 1)};
  }

  nn::GradList backward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& pre, const Eigen::MatrixXd& d_out) const {
    nn::GradList g(4);
    Eigen::MatrixXd h = nn::relu(pre);
    g[2] = h.transpose() * d_out;
    g[3] = d_out.colwise().sum();
    Eigen::MatrixXd dpre = (d_out * w2_.transpose()).cwiseProduct(nn::relu_mask(pre));
    g[0] = x.transpose() * dpre;
    g[1] = dpre.colwise().sum();
    return g;
  }

  void save(std::ostream& out) const {
    io::write_matrix(out, "w1", w1_);
    io::write_matrix(out, "b1", b1_);
    io::write_matrix(out, "w2", w2_);
    io::write_matrix(out, "b2", b2_);
  }

  static QNet load(std::istream& in) {
    QNet q;
    q.w1_ = io::read_matrix(in, "w1");
    q.b1_ = io::read_matrix(in, "b1");
    q.w2_ = io::read_matrix(in, "w2");
    q.b2_ = io::read_matrix(in, "b2");
    if (q.b1_.cols() != q.w1_.cols() || q.w2_.rows() != q.w1_.cols() || q.w2_.cols() != 2 || q.b2_.cols() != 2)
      fail(ErrorCode::load, "q-network shape mismatch");
    return q;
  }

  friend bool operator==(const QNet& a, const QNet& b) {
    return a.w1_ == b.w1_ && a.b1_ == b.b1_ && a.w2_ == b.w2_ && a.b2_ == b.b2_;
  }

 private:
  Eigen::MatrixXd w1_, b1_, w2_, b2_;
};

// Explores with probability eps; otherwise argmax with ties going to ask.
inline Action choose_action(const QNet& q, const Eigen::VectorXd& state, double eps, std::mt19937_64& rng) {
  if (!(eps >= 0.0 && eps <= 1.0)) fail(ErrorCode::parameter, "epsilon must lie in [0, 1]");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (unit(rng) < eps) return unit(rng) < 0.5 ? Action::ask : Action::rec;
  auto v = q.q_values(state);
  return v(1) > v(0) ? Action::rec : Action::ask;
}

struct Transition {
  Eigen::VectorXd state;
  Action action;
  double reward;
  Eigen::VectorXd next;
  bool terminal;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 10000) : capacity_(capacity) {
    if (capacity == 0) fail(ErrorCode::parameter, "replay capacity must be positive");
  }

  void push(Transition t) {
    if (items_.size() == capacity_) items_.pop_front();
    items_.push_back(std::move(t));
  }

  std::size_t size() const noexcept { return items_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  const Transition& operator[](std::size_t k) const { return items_[k]; }

  std::vector<const Transition*> sample(std::size_t n, std::mt19937_64& rng) const {
    std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
    std::vector<const Transition*> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) out.push_back(&items_[pick(rng)]);
    return out;
  }

 private:
  std::size_t capacity_;
  std::deque<Transition> items_;
};

inline std::vector<double> td_targets(const QNet& target, std::span<const Transition* const> batch, double discount) {
  std::vector<double> y;
  y.reserve(batch.size());
  for (const auto* t : batch) {
    double v = t->reward;
    if (!t->terminal) v += discount * target.q_values(t->next).maxCoeff();
    y.push_back(v);
  }
  return y;
}

inline double td_loss(const QNet& q, std::span<const Transition* const> batch, std::span<const double> targets) {
  double loss = 0.0;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    double d = q.q_values(batch[k]->state)(batch[k]->action == Action::ask ? 0 : 1) - targets[k];
    loss += d * d;
  }
  return batch.empty() ? 0.0 : loss / static_cast<double>(batch.size());
}

inline nn::GradList td_gradient(const QNet& q, std::span<const Transition* const> batch, std::span<const double> targets) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  Eigen::MatrixXd x(n, q.input_dim());
  for (Eigen::Index k = 0; k < n; ++k) x.row(k) = batch[static_cast<std::size_t>(k)]->state.transpose();
  Eigen::MatrixXd pre;
  Eigen::MatrixXd out = q.forward(x, &pre);
  Eigen::MatrixXd d_out = Eigen::MatrixXd::Zero(n, 2);
  for (Eigen::Index k = 0; k < n; ++k) {
    int a = batch[static_cast<std::size_t>(k)]->action == Action::ask ? 0 : 1;
    d_out(k, a) = 2.0 * (out(k, a) - targets[static_cast<std::size_t>(k)]) / static_cast<double>(n);
  }
  return q.backward(x, pre, d_out);
}

struct DqnConfig {
  int hidden = 64;
  double discount = 0.99;
  double eps_start = 1.0;
  double eps_end = 0.05;
  std::size_t capacity = 10000;
  std::size_t batch = 128;
  int target_sync = 20;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

// Online and target networks plus replay; one learner.
class DqnAgent {
 public:
  DqnAgent(int state_dim, const DqnConfig& cfg)
      : cfg_(cfg), online_(state_dim, cfg.hidden, cfg.seed), target_(online_), buffer_(cfg.capacity), opt_(cfg.lr),
        rng_(cfg.seed ^ 0x9e3779b97f4a7c15ull) {}

  const QNet& online() const noexcept { return online_; }
  const QNet& target() const noexcept { return target_; }
  ReplayBuffer& buffer() noexcept { return buffer_; }
  const DqnConfig& config() const noexcept { return cfg_; }
  int updates() const noexcept { return updates_; }

  void remember(Transition t) { buffer_.push(std::move(t)); }

  // One TD step; nullopt when the buffer is smaller than a batch.
  std::optional<double> update() {
    if (buffer_.size() < cfg_.batch) return std::nullopt;
    auto batch = buffer_.sample(cfg_.batch, rng_);
    auto y = td_targets(target_, batch, cfg_.discount);
    double loss = td_loss(online_, batch, y);
    opt_.step(online_.params(), td_gradient(online_, batch, y));
    if (++updates_ % cfg_.target_sync == 0) target_ = online_;
    return loss;
  }

  // Linear anneal over `total` training sessions.
  double epsilon(int session, int total) const {
    if (total <= 1) return cfg_.eps_end;
    double f = std::clamp(static_cast<double>(session) / (total - 1), 0.0, 1.0);
    return cfg_.eps_start + f * (cfg_.eps_end - cfg_.eps_start);
  }

 private:
  DqnConfig cfg_;
  QNet online_, target_;
  ReplayBuffer buffer_;
  nn::Adam opt_;
  std::mt19937_64 rng_;
  int updates_ = 0;
};

inline void save_qnet(std::ostream& out, const QNet& q, const std::string& fingerprint) {
  out << "kgcrs-qnet 1\nfingerprint " << fingerprint << '\n';
  q.save(out);
}

inline QNet load_qnet(std::istream& in, std::string* fingerprint = nullptr) {
  std::string line;
  auto magic = io::expect_line(in, line, "kgcrs-qnet");
  if (magic.size() != 2 || magic[1] != "1") fail(ErrorCode::load, "unsupported q-network version");
  auto fp = io::expect_line(in, line, "fingerprint");
  if (fingerprint) *fingerprint = fp.size() > 1 ? std::string(fp[1]) : "";
  return QNet::load(in);
}

}  // namespace kgcrs
