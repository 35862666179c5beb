// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "kgcrs/error.hpp"
#include "kgcrs/io.hpp"

namespace kgcrs {

// Flat `section.key = value` settings. Every key has a default; unknown keys
// are rejected. Keys under run.out and serve.* do not enter the fingerprint.
class RunConfig {
 public:
  RunConfig() {
    for (const auto& [k, v] : defaults()) values_[k] = v;
  }

  static const std::vector<std::pair<std::string, std::string>>& defaults() {
    static const std::vector<std::pair<std::string, std::string>> d = {
        {"run.seed", "1"},
        {"run.out", "out"},
        {"data.interactions", ""},
        {"data.triplets", ""},
        {"data.users", "500"},
        {"data.items", "200"},
        {"data.attrs", "30"},
        {"data.attrs_per_item", "5"},
        {"data.interactions_per_user", "20"},
        {"data.neg_per_pos", "4"},
        {"fm.dim", "64"},
        {"fm.lr", "0.01"},
        {"fm.l2", "0.0001"},
        {"fm.init_std", "0.01"},
        {"fm.epochs", "30"},
        {"fm.batch", "64"},
        {"active.hidden", "16"},
        {"active.discount", "0.95"},
        {"active.init_std", "0.3"},
        {"active.episodes", "200"},
        {"active.horizon", "15"},
        {"active.k_ask", "1"},
        {"active.lr", "0.01"},
        {"active.fm_lr", "0.05"},
        {"negative.attn_hidden", "16"},
        {"negative.discount", "0.95"},
        {"negative.batch", "10"},
        {"negative.init_std", "0.1"},
        {"negative.episodes", "300"},
        {"negative.steps", "2"},
        {"negative.lr", "0.005"},
        {"negative.fm_lr", "0.05"},
        {"negative.normalize_reward", "false"},
        {"policy.hidden", "64"},
        {"policy.discount", "0.99"},
        {"policy.eps_start", "1"},
        {"policy.eps_end", "0.05"},
        {"policy.capacity", "10000"},
        {"policy.batch", "128"},
        {"policy.target_sync", "20"},
        {"policy.lr", "0.001"},
        {"policy.sessions", "300"},
        {"policy.reward", "R_CPR"},
        {"session.max_turns", "15"},
        {"session.top_k", "10"},
        {"session.online_steps", "1"},
        {"session.online_lr", "0.05"},
        {"session.exclude_candidates", "true"},
        {"session.local_pool", "false"},
        {"session.variant", "full"},
        {"eval.sessions", "0"},
        {"eval.variants", "full,no_active,no_negative,no_samplers,abs_greedy,max_entropy"},
        {"eval.rewards", "R_CPR"},
        {"eval.seeds", "1,2,3,4,5"},
        {"serve.host", "127.0.0.1"},
        {"serve.port", "8080"},
        {"serve.timeout_minutes", "30"},
    };
    return d;
  }

  static bool known(std::string_view key) {
    for (const auto& [k, v] : defaults())
      if (k == key) return true;
    return false;
  }

  void set(const std::string& key, const std::string& value) {
    if (!known(key)) fail(ErrorCode::config, "unknown config key '" + key + "'");
    values_[key] = value;
  }

  const std::string& get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) fail(ErrorCode::config, "unknown config key '" + key + "'");
    return it->second;
  }

  template <typename T>
  T as(const std::string& key) const {
    const auto& v = get(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        fail(ErrorCode::config, "bad boolean");
      } else if constexpr (std::is_floating_point_v<T>) {
        return static_cast<T>(io::parse_double(v));
      } else {
        return io::parse_int<T>(v);
      }
    } catch (const Error&) {
      fail(ErrorCode::config, "bad value '" + v + "' for " + key);
    }
  }

  std::vector<std::string> list(const std::string& key) const {
    std::vector<std::string> out;
    std::string cur;
    for (char c : get(key)) {
      if (c == ',') {
        if (!cur.empty()) out.push_back(cur);
        cur.clear();
      } else if (c != ' ') {
        cur.push_back(c);
      }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
  }

  // Lines of `key = value`; blank lines and `#` comments are ignored.
  void merge(std::istream& in, const std::string& origin = "config") {
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      auto first = line.find_first_not_of(" \t");
      if (first == std::string::npos || line[first] == '#') continue;
      auto eq = line.find('=');
      if (eq == std::string::npos) fail(ErrorCode::config, origin + ":" + std::to_string(n) + ": expected key = value");
      auto trim = [](std::string s) {
        auto a = s.find_first_not_of(" \t\r");
        auto b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
      };
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
  }

  void merge_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::config, "cannot open config file " + path);
    merge(in, path);
  }

  static bool reproducibility_key(std::string_view key) {
    return key != "run.out" && key.substr(0, 6) != "serve.";
  }

  std::string canonical() const {
    std::ostringstream out;
    for (const auto& [k, v] : values_)
      if (reproducibility_key(k)) out << k << '=' << v << '\n';
    return out.str();
  }

  std::string fingerprint() const { return io::hex64(io::fnv1a(canonical())); }

  void write(std::ostream& out) const {
    out << "# fingerprint " << fingerprint() << '\n';
    for (const auto& [k, v] : values_) out << k << " = " << v << '\n';
  }

  const std::map<std::string, std::string>& values() const noexcept { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace kgcrs
