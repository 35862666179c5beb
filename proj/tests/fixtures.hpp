// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>


#include "kgcrs/config.hpp"
#include "kgcrs/graph.hpp"
#include "kgcrs/nn.hpp"
#include "kgcrs/pipeline.hpp"

namespace kgcrs::testing {

// Users first, then items, then attributes. Every item gets at least one
// attribute; remaining edges are Bernoulli.
inline HeteroGraph random_graph(std::size_t users, std::size_t items, std::size_t attrs, double p_attr,
                                double p_interact, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution attr_edge(p_attr), inter_edge(p_interact);
  std::vector<NodeDescriptor> nodes;
  NodeId id = 0;
  for (std::size_t k = 0; k < users; ++k) nodes.push_back({id++, NodeKind::user});
  for (std::size_t k = 0; k < items; ++k) nodes.push_back({id++, NodeKind::item});
  for (std::size_t k = 0; k < attrs; ++k) nodes.push_back({id++, NodeKind::attribute});
  auto item = [&](std::size_t k) { return static_cast<NodeId>(users + k); };
  auto attr = [&](std::size_t k) { return static_cast<NodeId>(users + items + k); };
  std::vector<EdgeDescriptor> edges;
  std::uniform_int_distribution<std::size_t> any_attr(0, attrs - 1);
  for (std::size_t i = 0; i < items; ++i) {
    edges.push_back({item(i), attr(any_attr(rng)), EdgeKind::has_attribute, "has_attribute"});
    for (std::size_t a = 0; a < attrs; ++a)
      if (attr_edge(rng)) edges.push_back({item(i), attr(a), EdgeKind::has_attribute, "has_attribute"});
  }
  for (std::size_t u = 0; u < users; ++u)
    for (std::size_t i = 0; i < items; ++i)
      if (inter_edge(rng)) edges.push_back({static_cast<NodeId>(u), item(i), EdgeKind::interact, "interact"});
  return load_graph(nodes, edges);
}

// Small trained pipeline shared by the session and service suites.
struct TinyRun {
  RunConfig config;
  PipelineSettings settings;
  PreparedData data;
  FmModel fm;
  ActivePolicy active;
  NegativePolicy negative;
  QNet qnet;

  static RunConfig tiny_config() {
    RunConfig c;
    c.set("data.users", "80");
    c.set("data.items", "60");
    c.set("data.attrs", "18");
    c.set("data.attrs_per_item", "4");
    c.set("data.interactions_per_user", "10");
    c.set("fm.dim", "16");
    c.set("fm.epochs", "8");
    c.set("active.episodes", "30");
    c.set("negative.episodes", "30");
    c.set("policy.sessions", "40");
    c.set("policy.batch", "32");
    c.set("eval.sessions", "40");
    return c;
  }

  explicit TinyRun(RunConfig c = tiny_config())
      : config(c),
        settings(settings_from(c)),
        data(settings),
        fm(train_fm(data, settings)),
        active(train_active(data, fm, settings)),
        negative(train_negative(data, fm, settings)),
        qnet(train_policy(data, models_for(data, fm, &active, &negative, nullptr), settings, Variant::named("full"))) {}

  SessionModels models() const { return models_for(data, fm, &active, &negative, &qnet); }

  SessionConfig session(const std::string& variant = "full") const {
    SessionConfig cfg = settings.session;
    cfg.variant = Variant::named(variant);
    return cfg;
  }

  static const TinyRun& shared() {
    static const TinyRun run;
    return run;
  }
};

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("kgcrs-test-" + name + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// max |a - b| / max(|a|, |b|, floor) over every entry.
inline double max_rel_error(const nn::GradList& a, const nn::GradList& b, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k)
    for (Eigen::Index i = 0; i < a[k].size(); ++i) {
      double x = a[k].data()[i], y = b[k].data()[i];
      double den = std::max({std::abs(x), std::abs(y), floor});
      worst = std::max(worst, std::abs(x - y) / den);
    }
  return worst;
}

// Central differences of `f` with respect to every entry of `params`.
template <typename F>
nn::GradList central_differences(const nn::ParamList& params, F&& f, double h = 1e-6) {
  nn::GradList out;
  for (auto* p : params) {
    Eigen::MatrixXd g(p->rows(), p->cols());
    for (Eigen::Index i = 0; i < p->size(); ++i) {
      double keep = p->data()[i];
      p->data()[i] = keep + h;
      double up = f();
      p->data()[i] = keep - h;
      double down = f();
      p->data()[i] = keep;
      g.data()[i] = (up - down) / (2.0 * h);
    }
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace kgcrs::testing
