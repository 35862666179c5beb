// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "kgcrs/error.hpp"
#include "kgcrs/session.hpp"

namespace kgcrs {

namespace detail {
inline void require_cohort(std::span<const Transcript> cohort) {
  if (cohort.empty()) fail(ErrorCode::undefined_metric, "metric over an empty cohort");
}
}  // namespace detail

// Fraction of sessions that succeeded at or before turn t.
inline double success_rate_at(std::span<const Transcript> cohort, int t) {
  detail::require_cohort(cohort);
  std::size_t hits = 0;
  for (const auto& s : cohort)
    if (s.success() && static_cast<int>(s.turns.size()) <= t) ++hits;
  return static_cast<double>(hits) / static_cast<double>(cohort.size());
}

// Mean turn at which sessions ended; non-successes count as the turn cap.
inline double average_turns(std::span<const Transcript> cohort) {
  detail::require_cohort(cohort);
  double total = 0.0;
  for (const auto& s : cohort) total += s.ended_at();
  return total / static_cast<double>(cohort.size());
}

// Per turn, the share of sessions still running at that turn that recommended.
// Turns no session reached report 0.
inline std::vector<double> rec_ratio_curve(std::span<const Transcript> cohort, int max_turns) {
  detail::require_cohort(cohort);
  std::vector<double> out(static_cast<std::size_t>(max_turns), 0.0);
  for (int t = 1; t <= max_turns; ++t) {
    std::size_t active = 0, recs = 0;
    for (const auto& s : cohort) {
      if (static_cast<int>(s.turns.size()) < t) continue;
      ++active;
      if (s.turns[static_cast<std::size_t>(t - 1)].action == Action::rec) ++recs;
    }
    if (active) out[static_cast<std::size_t>(t - 1)] = static_cast<double>(recs) / static_cast<double>(active);
  }
  return out;
}

struct MetricsReport {
  std::vector<double> sr;         // SR@1..SR@T
  double at = 0.0;
  std::vector<double> rec_ratio;  // per turn
  std::size_t cohort = 0;
  std::string fingerprint;
  std::vector<std::uint64_t> seeds;

  double sr_at(int t) const { return sr.at(static_cast<std::size_t>(t - 1)); }
};

inline MetricsReport compute_metrics(std::span<const Transcript> cohort, int max_turns, std::string fingerprint = {},
                                     std::vector<std::uint64_t> seeds = {}) {
  MetricsReport r;
  for (int t = 1; t <= max_turns; ++t) r.sr.push_back(success_rate_at(cohort, t));
  r.at = average_turns(cohort);
  r.rec_ratio = rec_ratio_curve(cohort, max_turns);
  r.cohort = cohort.size();
  r.fingerprint = std::move(fingerprint);
  r.seeds = std::move(seeds);
  return r;
}

inline nlohmann::json to_json(const MetricsReport& r) {
  return {{"sr", r.sr},           {"at", r.at},
          {"rec_ratio", r.rec_ratio}, {"cohort", r.cohort},
          {"fingerprint", r.fingerprint}, {"seeds", r.seeds}};
}

struct MeanStd {
  double mean = 0.0;
  double stdev = 0.0;  // sample standard deviation; 0 for a single value
};

inline MeanStd mean_std(std::span<const double> xs) {
  if (xs.empty()) fail(ErrorCode::undefined_metric, "mean of no values");
  MeanStd m;
  for (double x : xs) m.mean += x;
  m.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - m.mean) * (x - m.mean);
    m.stdev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return m;
}

}  // namespace kgcrs
