// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "kgcrs/error.hpp"

namespace kgcrs {

enum class SelectMode { sample, argmax };

}  // namespace kgcrs

namespace kgcrs::nn {

using Eigen::MatrixXd;
using Eigen::VectorXd;

using ParamList = std::vector<MatrixXd*>;
using GradList = std::vector<MatrixXd>;

inline GradList zeros_like(const ParamList& ps) {
  GradList g;
  g.reserve(ps.size());
  for (auto* p : ps) g.push_back(MatrixXd::Zero(p->rows(), p->cols()));
  return g;
}

inline void add_scaled(GradList& into, const GradList& g, double scale) {
  for (std::size_t k = 0; k < into.size(); ++k) into[k] += scale * g[k];
}

inline void fill_normal(MatrixXd& m, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, stddev);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = d(rng);
}

inline MatrixXd relu(const MatrixXd& x) { return x.cwiseMax(0.0); }

inline MatrixXd relu_mask(const MatrixXd& pre) {
  return (pre.array() > 0.0).cast<double>().matrix();
}

inline VectorXd softmax(const VectorXd& logits) {
  if (logits.size() == 0) return logits;
  VectorXd e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

// Gradient of log P(chosen sequence) w.r.t. logits when `chosen` is drawn
// one by one from the softmax over the not-yet-chosen entries.
inline VectorXd sequential_logprob_grad(const VectorXd& logits, std::span<const Eigen::Index> chosen) {
  VectorXd grad = VectorXd::Zero(logits.size());
  std::vector<bool> taken(static_cast<std::size_t>(logits.size()), false);
  for (auto c : chosen) {
    double mx = -INFINITY;
    for (Eigen::Index j = 0; j < logits.size(); ++j)
      if (!taken[static_cast<std::size_t>(j)]) mx = std::max(mx, logits(j));
    double z = 0.0;
    for (Eigen::Index j = 0; j < logits.size(); ++j)
      if (!taken[static_cast<std::size_t>(j)]) z += std::exp(logits(j) - mx);
    for (Eigen::Index j = 0; j < logits.size(); ++j)
      if (!taken[static_cast<std::size_t>(j)]) grad(j) -= std::exp(logits(j) - mx) / z;
    grad(c) += 1.0;
    taken[static_cast<std::size_t>(c)] = true;
  }
  return grad;
}

inline double sequential_logprob(const VectorXd& logits, std::span<const Eigen::Index> chosen) {
  std::vector<bool> taken(static_cast<std::size_t>(logits.size()), false);
  double lp = 0.0;
  for (auto c : chosen) {
    double mx = -INFINITY;
    for (Eigen::Index j = 0; j < logits.size(); ++j)
      if (!taken[static_cast<std::size_t>(j)]) mx = std::max(mx, logits(j));
    double z = 0.0;
    for (Eigen::Index j = 0; j < logits.size(); ++j)
      if (!taken[static_cast<std::size_t>(j)]) z += std::exp(logits(j) - mx);
    lp += logits(c) - mx - std::log(z);
    taken[static_cast<std::size_t>(c)] = true;
  }
  return lp;
}

// Draws k indices without replacement, each proportional to softmax(logits)
// over what remains.
inline std::vector<Eigen::Index> sample_sequential(const VectorXd& logits, std::size_t k, std::mt19937_64& rng) {
  const auto n = static_cast<std::size_t>(logits.size());
  k = std::min(k, n);
  std::vector<Eigen::Index> out;
  std::vector<double> w(n);
  std::vector<bool> taken(n, false);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t step = 0; step < k; ++step) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < n; ++j)
      if (!taken[j]) mx = std::max(mx, logits(static_cast<Eigen::Index>(j)));
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      w[j] = taken[j] ? 0.0 : std::exp(logits(static_cast<Eigen::Index>(j)) - mx);
      z += w[j];
    }
    double r = unit(rng) * z;
    std::size_t pick = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (taken[j]) continue;
      pick = j;
      if (r < w[j]) break;
      r -= w[j];
    }
    taken[pick] = true;
    out.push_back(static_cast<Eigen::Index>(pick));
  }
  return out;
}

// Top-k positions by value; equal values keep ascending `ids` order.
template <typename Id>
std::vector<Eigen::Index> top_k(const VectorXd& values, std::span<const Id> ids, std::size_t k) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(values.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](Eigen::Index a, Eigen::Index b) {
                      if (values(a) != values(b)) return values(a) > values(b);
                      return ids[static_cast<std::size_t>(a)] < ids[static_cast<std::size_t>(b)];
                    });
  idx.resize(k);
  return idx;
}

// Adam on a fixed parameter list. `step` descends; pass a negated gradient to ascend.
class Adam {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(const ParamList& params, const GradList& grads) {
    if (m_.empty()) {
      m_ = zeros_like(params);
      v_ = zeros_like(params);
    }
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, t_), c2 = 1.0 - std::pow(b2_, t_);
    for (std::size_t k = 0; k < params.size(); ++k) {
      m_[k] = b1_ * m_[k] + (1.0 - b1_) * grads[k];
      v_[k] = b2_ * v_[k] + (1.0 - b2_) * grads[k].cwiseProduct(grads[k]);
      params[k]->array() -= lr_ * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + eps_);
    }
  }

  double lr() const noexcept { return lr_; }

 private:
  double lr_, b1_, b2_, eps_;
  int t_ = 0;
  GradList m_, v_;
};

}  // namespace kgcrs::nn
