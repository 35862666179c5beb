// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "json.hpp"
#include "kgcrs/active_sampler.hpp"
#include "kgcrs/error.hpp"
#include "kgcrs/fm.hpp"
#include "kgcrs/interaction_policy.hpp"
#include "kgcrs/negative_sampler.hpp"
#include "kgcrs/pipeline.hpp"
#include "kgcrs/session.hpp"

namespace kgcrs {

// Checkpoints and reports of one run directory. Loading a checkpoint that is
// absent raises a precondition error naming the stage that writes it.
class ArtifactStore {
 public:
  explicit ArtifactStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

  const std::filesystem::path& dir() const noexcept { return dir_; }
  std::filesystem::path path(const std::string& name) const { return dir_ / name; }
  std::filesystem::path transcripts_dir() const { return dir_ / "transcripts"; }

  static std::string policy_file(const std::string& variant) { return "policy-" + variant + ".ckpt"; }

  bool has(const std::string& name) const { return std::filesystem::exists(path(name)); }

  void save_fm(const FmModel& fm, const std::string& fp) const {
    write_file("fm.ckpt", [&](std::ostream& o) { kgcrs::save_fm(o, fm, fp); });
  }
  void save_active(const ActivePolicy& p, const std::string& fp) const {
    write_file("active.ckpt", [&](std::ostream& o) { p.save(o, fp); });
  }
  void save_negative(const NegativePolicy& p, const std::string& fp) const {
    write_file("negative.ckpt", [&](std::ostream& o) { p.save(o, fp); });
  }
  void save_policy(const QNet& q, const std::string& variant, const std::string& fp) const {
    write_file(policy_file(variant), [&](std::ostream& o) { save_qnet(o, q, fp); });
  }

  FmModel load_fm() const {
    auto in = open("fm.ckpt", "pretrain-fm");
    return kgcrs::load_fm(in).model;
  }
  ActivePolicy load_active() const {
    auto in = open("active.ckpt", "pretrain-active");
    return ActivePolicy::load(in);
  }
  NegativePolicy load_negative() const {
    auto in = open("negative.ckpt", "pretrain-negative");
    return NegativePolicy::load(in);
  }
  QNet load_policy(const std::string& variant) const {
    auto in = open(policy_file(variant), "train-policy (variant " + variant + ")");
    return load_qnet(in);
  }

  // Report files are JSON objects carrying the producing fingerprint.
  void write_json(const std::string& name, nlohmann::json j, const std::string& fp) const {
    j["fingerprint"] = fp;
    write_file(name, [&](std::ostream& o) { o << j.dump(2) << '\n'; });
  }

  // One JSON object per line; the first line names the fingerprint.
  template <typename Rows>
  void write_jsonl(const std::string& name, const Rows& rows, const std::string& fp) const {
    write_file(name, [&](std::ostream& o) {
      o << nlohmann::json{{"fingerprint", fp}}.dump() << '\n';
      for (const auto& r : rows) o << nlohmann::json(r).dump() << '\n';
    });
  }

  template <typename Fn>
  void write_file(const std::string& name, Fn&& fn) const {
    std::filesystem::create_directories(dir_);
    auto tmp = path(name + ".tmp");
    {
      std::ofstream out(tmp, std::ios::binary);
      if (!out) fail(ErrorCode::runtime, "cannot write " + tmp.string());
      fn(out);
      if (!out) fail(ErrorCode::runtime, "write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path(name));
  }

 private:
  std::ifstream open(const std::string& name, const std::string& stage) const {
    std::ifstream in(path(name), std::ios::binary);
    if (!in) fail(ErrorCode::precondition, "missing " + path(name).string() + "; run " + stage + " first");
    return in;
  }

  std::filesystem::path dir_;
};

// Checkpoints needed to run sessions of one variant.
struct LoadedModels {
  FmModel fm;
  std::optional<ActivePolicy> active;
  std::optional<NegativePolicy> negative;
  std::optional<QNet> qnet;

  SessionModels view(const PreparedData& d) const {
    return models_for(d, fm, active ? &*active : nullptr, negative ? &*negative : nullptr, qnet ? &*qnet : nullptr);
  }
};

inline LoadedModels load_models(const ArtifactStore& store, const Variant& v) {
  LoadedModels m{store.load_fm(), std::nullopt, std::nullopt, std::nullopt};
  if (v.uses_active()) m.active = store.load_active();
  if (v.uses_negative()) m.negative = store.load_negative();
  if (v.uses_policy()) m.qnet = store.load_policy(v.name);
  return m;
}

inline void to_json(nlohmann::json& j, const FmEpochLog& l) {
  j = {{"epoch", l.epoch}, {"item_loss", l.item_loss}, {"attr_loss", l.attr_loss}};
}
inline void to_json(nlohmann::json& j, const ActiveEpisodeLog& l) {
  j = {{"episode", l.episode}, {"return", l.ret}, {"auc", l.auc}};
}
inline void to_json(nlohmann::json& j, const NegEpisodeLog& l) {
  j = {{"episode", l.episode}, {"return", l.ret}, {"mean_reward", l.mean_reward}};
}
inline void to_json(nlohmann::json& j, const PolicyLogEntry& l) {
  j = {{"session", l.session}, {"epsilon", l.epsilon}, {"return", l.ret},
       {"turns", l.turns},     {"success", l.success}, {"td_loss", l.loss}};
}

}  // namespace kgcrs
