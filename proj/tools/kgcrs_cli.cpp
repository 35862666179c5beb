// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "kgcrs/artifacts.hpp"
#include "kgcrs/config.hpp"
#include "kgcrs/dataset.hpp"
#include "kgcrs/error.hpp"
#include "kgcrs/metrics.hpp"
#include "kgcrs/pipeline.hpp"
#include "kgcrs/service.hpp"
#include "kgcrs/session.hpp"

namespace {

using namespace kgcrs;
using Clock = std::chrono::steady_clock;

constexpr int kExitConfig = 2;
constexpr int kExitPrecondition = 3;
constexpr int kExitRuntime = 4;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Context {
  RunConfig config;
  PipelineSettings settings;
  ArtifactStore store{"out"};
};

Context make_context(const RunConfig& cfg) {
  Context c{cfg, settings_from(cfg), ArtifactStore(cfg.get("run.out"))};
  c.store.write_file("config.txt", [&](std::ostream& o) { cfg.write(o); });
  return c;
}

void note(const std::string& msg) { std::cerr << msg << '\n'; }

int cmd_gen_data(const Context& c) {
  if (!c.settings.synthetic_data()) fail(ErrorCode::config, "gen-data needs data.interactions and data.triplets unset");
  auto files = generate_synthetic(c.settings.synthetic);
  std::string header = "# fingerprint " + c.settings.fingerprint + "\n";
  c.store.write_file("interactions.tsv", [&](std::ostream& o) { o << header << files.interactions; });
  c.store.write_file("triplets.tsv", [&](std::ostream& o) { o << header << files.triplets; });
  auto ds = load_dataset(files);
  nlohmann::json j{{"users", c.settings.synthetic.n_users},
                   {"items", c.settings.synthetic.n_items},
                   {"attributes", c.settings.synthetic.n_attrs},
                   {"interactions", ds.records.size()}};
  c.store.write_json("data.json", j, c.settings.fingerprint);
  std::cout << j.dump() << '\n';
  return 0;
}

int cmd_pretrain_fm(const Context& c) {
  auto t0 = Clock::now();
  PreparedData d(c.settings);
  for (const auto& w : d.data().warnings) note("warning: " + w);
  std::vector<FmEpochLog> log;
  auto fm = train_fm(d, c.settings, &log);
  c.store.save_fm(fm, c.settings.fingerprint);
  c.store.write_jsonl("fm_log.jsonl", log, c.settings.fingerprint);

  PreferenceContext ctx;
  std::vector<double> pos, neg;
  for (const auto& t : d.valid_sets().items) {
    ctx.user = t.user;
    ctx.attrs.clear();
    pos.push_back(score_item(fm, ctx, t.pos));
    neg.push_back(score_item(fm, ctx, t.neg));
  }
  nlohmann::json j{{"epochs", log.size()}, {"seconds", seconds_since(t0)}};
  if (!log.empty()) j["final_item_loss"] = log.back().item_loss, j["final_attr_loss"] = log.back().attr_loss;
  if (!pos.empty()) j["valid_item_auc"] = auc(pos, neg);
  c.store.write_json("fm_report.json", j, c.settings.fingerprint);
  std::cout << j.dump() << '\n';
  return 0;
}

int cmd_pretrain_active(const Context& c) {
  auto fm = c.store.load_fm();
  auto t0 = Clock::now();
  PreparedData d(c.settings);
  std::vector<ActiveEpisodeLog> log;
  auto policy = train_active(d, fm, c.settings, &log);
  c.store.save_active(policy, c.settings.fingerprint);
  c.store.write_jsonl("active_log.jsonl", log, c.settings.fingerprint);
  std::cout << nlohmann::json{{"episodes", log.size()}, {"seconds", seconds_since(t0)}}.dump() << '\n';
  return 0;
}

int cmd_pretrain_negative(const Context& c) {
  auto fm = c.store.load_fm();
  auto t0 = Clock::now();
  PreparedData d(c.settings);
  std::vector<NegEpisodeLog> log;
  auto policy = train_negative(d, fm, c.settings, &log);
  c.store.save_negative(policy, c.settings.fingerprint);
  c.store.write_jsonl("negative_log.jsonl", log, c.settings.fingerprint);
  std::cout << nlohmann::json{{"episodes", log.size()}, {"seconds", seconds_since(t0)}}.dump() << '\n';
  return 0;
}

// Stage 3 needs every stage-2 checkpoint its variant uses.
int cmd_train_policy(const Context& c) {
  const auto& variant = c.settings.session.variant;
  LoadedModels m{c.store.load_fm(), std::nullopt, std::nullopt, std::nullopt};
  if (variant.uses_active()) m.active = c.store.load_active();
  if (variant.uses_negative()) m.negative = c.store.load_negative();
  auto t0 = Clock::now();
  PreparedData d(c.settings);
  std::vector<PolicyLogEntry> log;
  auto q = train_policy(d, m.view(d), c.settings, variant, &log);
  c.store.save_policy(q, variant.name, c.settings.fingerprint);
  c.store.write_jsonl("policy_log_" + variant.name + ".jsonl", log, c.settings.fingerprint);
  std::cout << nlohmann::json{{"variant", variant.name}, {"sessions", log.size()}, {"seconds", seconds_since(t0)}}.dump()
            << '\n';
  return 0;
}

nlohmann::json report_json(const MetricsReport& r) { return to_json(r); }

int cmd_eval(const Context& c) {
  const auto& variant = c.settings.session.variant;
  auto m = load_models(c.store, variant);
  PreparedData d(c.settings);
  auto cohort = eval_cohort(d, c.settings.seed, c.settings.eval_sessions);
  std::filesystem::create_directories(c.store.transcripts_dir());
  std::string tname = "transcripts/eval-" + variant.name + ".jsonl";
  std::vector<Transcript> transcripts;
  c.store.write_file(tname, [&](std::ostream& o) {
    o << nlohmann::json{{"type", "run"}, {"fingerprint", c.settings.fingerprint}}.dump() << '\n';
    transcripts = evaluate(d, m.view(d), c.settings, variant, cohort, [&](const Session& s) { write_transcript(o, s); });
  });
  auto r = compute_metrics(transcripts, c.settings.session.max_turns, c.settings.fingerprint, {c.settings.seed});
  auto j = report_json(r);
  j["variant"] = variant.name;
  j["reward"] = c.config.get("policy.reward");
  c.store.write_json("eval-" + variant.name + ".json", j, c.settings.fingerprint);
  std::cout << j.dump() << '\n';
  return 0;
}

std::vector<std::uint64_t> parse_seeds(const RunConfig& cfg) {
  std::vector<std::uint64_t> out;
  for (const auto& s : cfg.list("eval.seeds")) {
    try {
      out.push_back(io::parse_int<std::uint64_t>(s));
    } catch (const Error&) {
      fail(ErrorCode::config, "bad seed '" + s + "' in eval.seeds");
    }
  }
  if (out.empty()) fail(ErrorCode::config, "eval.seeds is empty");
  return out;
}

// Trains stages 1-3 per seed and evaluates every (variant, reward) cell.
int cmd_eval_grid(const Context& c) {
  auto variants = c.config.list("eval.variants");
  auto rewards = c.config.list("eval.rewards");
  for (const auto& v : variants) Variant::named(v);
  for (const auto& r : rewards) RewardTable::parse(r);
  auto seeds = parse_seeds(c.config);
  auto t0 = Clock::now();
  auto rows = run_grid(c.config, variants, rewards, seeds, [](const GridRow& r) {
    std::cerr << r.variant << " " << r.reward << " seed " << r.seed << ": ";
    if (r.report)
      std::cerr << "SR@" << r.report->sr.size() << "=" << r.report->sr.back() << " AT=" << r.report->at;
    else
      std::cerr << "failed: " << r.error;
    std::cerr << " (" << r.seconds << " s)\n";
  });
  nlohmann::json runs = nlohmann::json::array(), summary = nlohmann::json::array();
  std::size_t failed = 0;
  for (const auto& r : rows) {
    nlohmann::json j{{"variant", r.variant}, {"reward", r.reward}, {"seed", r.seed}, {"seconds", r.seconds}};
    if (r.report)
      j["metrics"] = report_json(*r.report);
    else
      j["error"] = r.error, ++failed;
    runs.push_back(j);
  }
  for (const auto& s : summarize_grid(rows))
    summary.push_back({{"variant", s.variant},
                       {"reward", s.reward},
                       {"runs", s.runs},
                       {"sr_final_mean", s.sr15.mean},
                       {"sr_final_std", s.sr15.stdev},
                       {"at_mean", s.at.mean},
                       {"at_std", s.at.stdev},
                       {"sr_mean", s.sr_mean},
                       {"rec_ratio_mean", s.rec_ratio_mean}});
  nlohmann::json out{{"seeds", seeds}, {"runs", runs}, {"summary", summary}, {"seconds", seconds_since(t0)}};
  c.store.write_json("grid.json", out, c.settings.fingerprint);
  for (const auto& s : summary)
    std::cout << s["variant"].get<std::string>() << '\t' << s["reward"].get<std::string>() << "\tSR="
              << s["sr_final_mean"].get<double>() << "±" << s["sr_final_std"].get<double>()
              << "\tAT=" << s["at_mean"].get<double>() << "±" << s["at_std"].get<double>() << '\n';
  return failed == rows.size() && !rows.empty() ? kExitRuntime : 0;
}

std::atomic<httplib::Server*> g_server{nullptr};

int cmd_serve(const Context& c) {
  std::optional<LoadedModels> loaded;
  std::optional<PreparedData> data;
  try {
    loaded = load_models(c.store, c.settings.session.variant);
    data.emplace(c.settings);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::precondition) throw;
    note(std::string("serving without models: ") + e.what());
    loaded.reset();
  }
  ServiceOptions opts;
  opts.transcripts = c.store.dir() / "live";
  opts.timeout = std::chrono::minutes(c.config.as<int>("serve.timeout_minutes"));
  opts.session = c.settings.session;
  opts.seed = c.settings.seed;
  std::optional<SessionModels> view;
  if (loaded) view = loaded->view(*data);
  CrsService svc(view, opts);
  httplib::Server server;
  mount(server, svc);
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (auto* s = g_server.load()) s->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (auto* s = g_server.load()) s->stop();
  });
  std::atomic<bool> running{true};
  std::thread sweeper([&] {
    while (running) {
      for (int k = 0; k < 50 && running; ++k) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      svc.expire_idle();
    }
  });
  auto host = c.config.get("serve.host");
  auto port = c.config.as<int>("serve.port");
  note("listening on " + host + ":" + std::to_string(port) + " (transcripts in " + opts.transcripts.string() + ")");
  bool ok = server.listen(host, port);
  running = false;
  sweeper.join();
  g_server = nullptr;
  if (!ok) fail(ErrorCode::runtime, "cannot listen on " + host + ":" + std::to_string(port));
  return 0;
}

struct SimulateArgs {
  std::uint64_t seed = 1;
  std::optional<std::size_t> index;
};

// One simulated session from the held-out cohort, transcript to stdout.
int cmd_simulate(const Context& c, const SimulateArgs& a) {
  const auto& variant = c.settings.session.variant;
  auto m = load_models(c.store, variant);
  PreparedData d(c.settings);
  auto cohort = eval_cohort(d, c.settings.seed, 0);
  if (cohort.empty()) fail(ErrorCode::precondition, "held-out cohort is empty");
  std::size_t k = a.index ? *a.index : static_cast<std::size_t>(derive_seed(a.seed, "simulate.pick") % cohort.size());
  if (k >= cohort.size()) fail(ErrorCode::config, "--index out of range (cohort has " + std::to_string(cohort.size()) + ")");
  SessionConfig cfg = c.settings.session;
  cfg.epsilon = 0.0;
  auto s = run_session(m.view(d), cfg, cohort[k], a.seed, "simulate-" + std::to_string(a.seed));
  std::cout << nlohmann::json{{"type", "run"}, {"fingerprint", c.settings.fingerprint}, {"target", cohort[k].target}}.dump()
            << '\n';
  write_transcript(std::cout, s);
  return 0;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::config: return kExitConfig;
    case ErrorCode::precondition: return kExitPrecondition;
    default: return kExitRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-graph conversational recommender: staged training, evaluation and serving"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_file;
  std::vector<std::string> sets;
  app.add_option("--config", config_file, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--set", sets, "override a config key, key=value (repeatable)");
  std::map<std::string, std::string> flag_values;
  for (const auto& [key, def] : RunConfig::defaults())
    app.add_option("--" + key, flag_values[key], "default: " + (def.empty() ? std::string("(empty)") : def));

  auto* gen = app.add_subcommand("gen-data", "write a seeded synthetic dataset");
  auto* pfm = app.add_subcommand("pretrain-fm", "stage 1: BPR pretraining of the factorization machine");
  auto* pact = app.add_subcommand("pretrain-active", "stage 2: pretrain the active sampler");
  auto* pneg = app.add_subcommand("pretrain-negative", "stage 2: pretrain the negative sampler");
  auto* ptr = app.add_subcommand("train-policy", "stage 3: train the ask/recommend policy");
  auto* ev = app.add_subcommand("eval", "evaluate checkpoints on the held-out cohort");
  bool grid = false;
  ev->add_flag("--grid", grid, "train and evaluate every eval.variants x eval.rewards x eval.seeds cell");
  auto* srv = app.add_subcommand("serve", "run the JSON-over-HTTP session service");
  auto* sim = app.add_subcommand("simulate", "run one simulated session and print its transcript");
  SimulateArgs sim_args;
  std::size_t sim_index = 0;
  sim->add_option("--seed", sim_args.seed, "session seed");
  auto* idx_opt = sim->add_option("--index", sim_index, "cohort member (default: derived from --seed)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }
  if (idx_opt->count()) sim_args.index = sim_index;

  try {
    RunConfig cfg;
    if (!config_file.empty()) cfg.merge_file(config_file);
    for (const auto& [key, def] : RunConfig::defaults())
      if (app.get_option("--" + key)->count()) cfg.set(key, flag_values[key]);
    for (const auto& kv : sets) {
      auto eq = kv.find('=');
      if (eq == std::string::npos) fail(ErrorCode::config, "--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    auto ctx = make_context(cfg);
    note("fingerprint " + ctx.settings.fingerprint);
    if (*gen) return cmd_gen_data(ctx);
    if (*pfm) return cmd_pretrain_fm(ctx);
    if (*pact) return cmd_pretrain_active(ctx);
    if (*pneg) return cmd_pretrain_negative(ctx);
    if (*ptr) return cmd_train_policy(ctx);
    if (*ev) return grid ? cmd_eval_grid(ctx) : cmd_eval(ctx);
    if (*srv) return cmd_serve(ctx);
    if (*sim) return cmd_simulate(ctx, sim_args);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
