// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>
#include <vector>

#include <Eigen/Dense>  // ahead of httplib.h, whose resolver headers define _res

#include "httplib.h"
#include "json.hpp"
#include "kgcrs/error.hpp"
#include "kgcrs/metrics.hpp"
#include "kgcrs/pipeline.hpp"
#include "kgcrs/session.hpp"

namespace kgcrs {

using ServiceClock = std::function<std::chrono::steady_clock::time_point()>;

struct ServiceOptions {
  std::filesystem::path transcripts;
  std::chrono::minutes timeout{30};
  SessionConfig session;
  std::uint64_t seed = 1;
};

inline int http_status(ErrorCode c) {
  switch (c) {
    case ErrorCode::not_found: return 404;
    case ErrorCode::conflict: return 409;
    case ErrorCode::gone: return 410;
    case ErrorCode::unavailable: return 503;
    case ErrorCode::runtime: return 500;
    default: return 400;
  }
}

inline nlohmann::json error_body(std::string_view code, const std::string& message) {
  return {{"error", {{"code", code}, {"message", message}}}};
}

inline nlohmann::json prompt_json(const Prompt& p) {
  nlohmann::json j{{"turn", p.turn}, {"action", to_string(p.action)}};
  if (p.action == Action::ask)
    j["attribute"] = p.attribute;
  else
    j["items"] = p.items;
  return j;
}

// Live sessions over shared read-only models. Every session has one
// append-only transcript file named after its token; finished transcripts
// feed the metrics snapshot.
class CrsService {
 public:
  CrsService(std::optional<SessionModels> models, ServiceOptions opts,
             ServiceClock clock = [] { return std::chrono::steady_clock::now(); })
      : models_(models), opts_(std::move(opts)), clock_(std::move(clock)), token_rng_(std::random_device{}()) {
    if (models_) models_->require(opts_.session.variant);
    std::filesystem::create_directories(opts_.transcripts);
    reload();
  }

  bool ready() const noexcept { return models_.has_value(); }
  const ServiceOptions& options() const noexcept { return opts_; }

  // Body fields, all optional: user (integer id), seed_attribute (integer id).
  nlohmann::json create(const nlohmann::json& body) {
    expire_idle();
    if (!models_) fail(ErrorCode::unavailable, "model checkpoints are not loaded");
    if (!body.is_object() && !body.is_null()) fail(ErrorCode::contract, "request body must be a JSON object");
    auto user = optional_id(body, "user");
    auto seed_attr = optional_id(body, "seed_attribute");

    std::string token;
    std::uint64_t seed;
    {
      std::unique_lock lock(map_mutex_);
      do token = new_token();
      while (sessions_.count(token) || std::filesystem::exists(file_of(token)));
      seed = derive_seed(opts_.seed, "serve.session", created_++);
    }
    auto entry = std::make_shared<Entry>();
    entry->live = std::make_unique<Session>(*models_, opts_.session, token, user, seed_attr, seed);
    entry->touched = clock_();
    append(token, entry->live->header_json());
    advance_prompt(*entry, token);
    auto out = view(*entry, token);
    std::unique_lock lock(map_mutex_);
    sessions_[token] = std::move(entry);
    return out;
  }

  // Body: {"response": "accept"|"reject", "target": attribute id | item id | item list}.
  nlohmann::json feedback(const std::string& token, const nlohmann::json& body) {
    expire_idle();
    auto entry = find(token);
    std::lock_guard guard(entry->mutex);
    if (!entry->live) {
      if (entry->record.finished()) fail(ErrorCode::gone, "session " + token + " has ended");
      fail(ErrorCode::unavailable, "session " + token + " cannot resume without model checkpoints");
    }
    auto& s = *entry->live;
    if (s.finished()) fail(ErrorCode::gone, "session " + token + " has ended");
    if (!body.is_object() || !body.contains("response") || !body.contains("target"))
      fail(ErrorCode::contract, "feedback needs 'response' and 'target'");
    if (!body.at("response").is_string()) fail(ErrorCode::contract, "'response' must be a string");
    auto response = parse_response(body.at("response").get<std::string>());
    const auto& pending = s.pending();
    if (!pending) fail(ErrorCode::conflict, "no pending prompt");
    if (!target_matches(*pending, body.at("target")))
      fail(ErrorCode::conflict, "target does not match the pending prompt for turn " + std::to_string(pending->turn));
    const auto& rec = s.respond(response);
    entry->touched = clock_();
    append(token, turn_json(rec));
    advance_prompt(*entry, token);
    return view(*entry, token);
  }

  nlohmann::json get(const std::string& token) {
    expire_idle();
    auto entry = find(token);
    std::lock_guard guard(entry->mutex);
    return view(*entry, token);
  }

  nlohmann::json metrics() {
    expire_idle();
    std::vector<Transcript> done;
    std::size_t active = 0, created = 0;
    {
      std::shared_lock lock(map_mutex_);
      created = sessions_.size();
      for (const auto& [token, e] : sessions_) {
        std::lock_guard guard(e->mutex);
        if (e->finished())
          done.push_back(e->record);
        else
          ++active;
      }
    }
    int T = opts_.session.max_turns;
    nlohmann::json j{{"active_sessions", active}, {"completed_sessions", done.size()}, {"total_sessions", created},
                     {"max_turns", T}};
    if (done.empty()) {
      j["sr"] = std::vector<double>(static_cast<std::size_t>(T), 0.0);
      j["sr15"] = 0.0;
      j["at"] = 0.0;
      j["rec_ratio"] = std::vector<double>(static_cast<std::size_t>(T), 0.0);
      return j;
    }
    auto r = compute_metrics(done, T);
    j["sr"] = r.sr;
    j["sr15"] = r.sr.back();
    j["at"] = r.at;
    j["rec_ratio"] = r.rec_ratio;
    return j;
  }

  // Aborts sessions idle for longer than the timeout; returns how many.
  std::size_t expire_idle() {
    auto now = clock_();
    std::vector<std::pair<std::string, std::shared_ptr<Entry>>> all;
    {
      std::shared_lock lock(map_mutex_);
      all.assign(sessions_.begin(), sessions_.end());
    }
    std::size_t n = 0;
    for (auto& [token, e] : all) {
      std::unique_lock guard(e->mutex, std::try_to_lock);
      if (!guard.owns_lock() || !e->live || e->live->finished()) continue;
      if (now - e->touched < opts_.timeout) continue;
      e->live->abort("idle timeout");
      finish(*e, token);
      ++n;
    }
    return n;
  }

  std::vector<Transcript> completed() const {
    std::vector<Transcript> out;
    std::shared_lock lock(map_mutex_);
    for (const auto& [token, e] : sessions_) {
      std::lock_guard guard(e->mutex);
      if (e->finished()) out.push_back(e->record);
    }
    return out;
  }

  std::filesystem::path file_of(const std::string& token) const { return opts_.transcripts / (token + ".jsonl"); }

 private:
  struct Entry {
    std::mutex mutex;
    std::unique_ptr<Session> live;
    Transcript record;  // kept current once finished, or for sessions restored without models
    std::chrono::steady_clock::time_point touched;

    bool finished() const { return live ? live->finished() : record.finished(); }
  };

  static std::optional<NodeId> optional_id(const nlohmann::json& body, const char* key) {
    if (!body.is_object() || !body.contains(key) || body.at(key).is_null()) return std::nullopt;
    const auto& v = body.at(key);
    if (!v.is_number_unsigned()) fail(ErrorCode::contract, std::string("'") + key + "' must be a non-negative integer");
    return v.get<NodeId>();
  }

  static bool target_matches(const Prompt& p, const nlohmann::json& target) {
    if (p.action == Action::ask) return target.is_number_unsigned() && target.get<NodeId>() == p.attribute;
    if (target.is_number_unsigned())
      return std::find(p.items.begin(), p.items.end(), target.get<NodeId>()) != p.items.end();
    if (target.is_array()) {
      if (target.size() != p.items.size()) return false;
      for (std::size_t k = 0; k < p.items.size(); ++k)
        if (!target[k].is_number_unsigned() || target[k].get<NodeId>() != p.items[k]) return false;
      return true;
    }
    return false;
  }

  std::string new_token() {
    std::uniform_int_distribution<std::uint64_t> d;
    return io::hex64(d(token_rng_)) + io::hex64(d(token_rng_));
  }

  std::shared_ptr<Entry> find(const std::string& token) const {
    std::shared_lock lock(map_mutex_);
    auto it = sessions_.find(token);
    if (it == sessions_.end()) fail(ErrorCode::not_found, "unknown session token '" + token + "'");
    return it->second;
  }

  void append(const std::string& token, const nlohmann::json& line) const {
    std::ofstream out(file_of(token), std::ios::app | std::ios::binary);
    out << line.dump() << '\n';
    out.flush();
    if (!out) fail(ErrorCode::runtime, "cannot append to transcript " + file_of(token).string());
  }

  void finish(Entry& e, const std::string& token) {
    append(token, e.live->end_json());
    e.record = to_transcript(*e.live);
  }

  void advance_prompt(Entry& e, const std::string& token) {
    if (e.live->finished()) {
      finish(e, token);
      return;
    }
    try {
      e.live->prompt();
    } catch (const Error& err) {
      e.live->abort(err.what());
      finish(e, token);
    }
  }

  nlohmann::json view(const Entry& e, const std::string& token) const {
    nlohmann::json j{{"token", token}};
    if (e.live) {
      const auto& s = *e.live;
      j["user"] = s.anonymous() ? nlohmann::json(nullptr) : nlohmann::json(s.user());
      j["anonymous"] = s.anonymous();
      j["turn"] = s.turn();
      j["max_turns"] = s.config().max_turns;
      j["status"] = to_string(s.status());
      j["accepted"] = s.accepted();
      j["rejected"] = s.rejected();
      j["candidates"] = s.candidates().size();
      j["prompt"] = s.pending() ? prompt_json(*s.pending()) : nlohmann::json(nullptr);
      j["last"] = s.turns().empty() ? nlohmann::json(nullptr) : turn_json(s.turns().back());
      if (!s.diagnostic().empty()) j["diagnostic"] = s.diagnostic();
    } else {
      const auto& t = e.record;
      bool anon = t.header.value("anonymous", false);
      j["user"] = anon ? nlohmann::json(nullptr) : t.header.at("user");
      j["anonymous"] = anon;
      j["turn"] = t.turns.empty() ? 1 : t.turns.back().turn;
      j["max_turns"] = t.max_turns;
      j["status"] = to_string(t.status);
      j["prompt"] = nullptr;
      j["last"] = t.turns.empty() ? nlohmann::json(nullptr) : turn_json(t.turns.back());
    }
    return j;
  }

  // Restores every transcript in the directory. Unfinished sessions are
  // replayed turn by turn against the loaded models.
  void reload() {
    std::vector<std::filesystem::path> files;
    for (const auto& f : std::filesystem::directory_iterator(opts_.transcripts))
      if (f.path().extension() == ".jsonl") files.push_back(f.path());
    std::sort(files.begin(), files.end());
    for (const auto& path : files) {
      std::ifstream in(path, std::ios::binary);
      Transcript t;
      try {
        t = parse_transcript(in);
      } catch (const Error&) {
        continue;
      }
      auto token = path.stem().string();
      auto e = std::make_shared<Entry>();
      e->record = t;
      e->touched = clock_();
      if (!t.finished() && models_) {
        try {
          e->live = replay(t, token);
        } catch (const Error& err) {
          e->live.reset();
          e->record.status = SessionStatus::aborted;
          append(token, {{"type", "end"}, {"status", "aborted"}, {"turns", t.turns.size()}, {"diagnostic", err.what()}});
        }
      }
      sessions_[token] = std::move(e);
      ++created_;
    }
  }

  std::unique_ptr<Session> replay(const Transcript& t, const std::string& token) {
    const auto& h = t.header;
    SessionConfig cfg = opts_.session;
    cfg.variant = Variant::named(h.at("variant").get<std::string>());
    cfg.max_turns = h.at("max_turns").get<int>();
    cfg.top_k = h.at("top_k").get<std::size_t>();
    models_->require(cfg.variant);
    std::optional<NodeId> user;
    if (!h.value("anonymous", false)) user = h.at("user").get<NodeId>();
    std::optional<NodeId> seed_attr;
    if (!h.at("seed_attribute").is_null()) seed_attr = h.at("seed_attribute").get<NodeId>();
    auto s = std::make_unique<Session>(*models_, cfg, token, user, seed_attr, h.at("seed").get<std::uint64_t>());
    for (const auto& rec : t.turns) {
      const auto& p = s->prompt();
      bool same = p.action == rec.action &&
                  (p.action == Action::ask ? rec.attribute && *rec.attribute == p.attribute : p.items == rec.items);
      if (!same) fail(ErrorCode::load, "transcript diverges from the models at turn " + std::to_string(rec.turn));
      s->respond(rec.response);
    }
    if (!s->finished()) s->prompt();
    return s;
  }

  std::optional<SessionModels> models_;
  ServiceOptions opts_;
  ServiceClock clock_;
  std::mt19937_64 token_rng_;
  mutable std::shared_mutex map_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::uint64_t created_ = 0;
};

// Routes: POST /sessions, POST /sessions/{token}/feedback,
// GET /sessions/{token}, GET /metrics.
inline void mount(httplib::Server& server, CrsService& svc) {
  auto guarded = [](httplib::Response& res, int ok_status, const std::function<nlohmann::json()>& fn) {
    try {
      res.status = ok_status;
      res.set_content(fn().dump(), "application/json");
    } catch (const Error& e) {
      res.status = http_status(e.code());
      res.set_content(error_body(to_string(e.code()), e.what()).dump(), "application/json");
    } catch (const nlohmann::json::exception& e) {
      res.status = 400;
      res.set_content(error_body("bad_request", e.what()).dump(), "application/json");
    } catch (const std::exception& e) {
      res.status = 500;
      res.set_content(error_body("runtime_error", e.what()).dump(), "application/json");
    }
  };
  auto body_of = [](const httplib::Request& req) {
    return req.body.empty() ? nlohmann::json::object() : nlohmann::json::parse(req.body);
  };
  server.Post("/sessions", [&svc, guarded, body_of](const httplib::Request& req, httplib::Response& res) {
    guarded(res, 201, [&] { return svc.create(body_of(req)); });
  });
  server.Post(R"(/sessions/([^/]+)/feedback)",
              [&svc, guarded, body_of](const httplib::Request& req, httplib::Response& res) {
                guarded(res, 200, [&] { return svc.feedback(req.matches[1], body_of(req)); });
              });
  server.Get(R"(/sessions/([^/]+))", [&svc, guarded](const httplib::Request& req, httplib::Response& res) {
    guarded(res, 200, [&] { return svc.get(req.matches[1]); });
  });
  server.Get("/metrics", [&svc, guarded](const httplib::Request&, httplib::Response& res) {
    guarded(res, 200, [&] { return svc.metrics(); });
  });
}

}  // namespace kgcrs
