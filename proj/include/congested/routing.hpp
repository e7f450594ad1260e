#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "congested/carmab.hpp"
#include "congested/env.hpp"
#include "congested/errors.hpp"
#include "congested/mdp.hpp"
#include "congested/rng.hpp"
#include "congested/trace.hpp"

namespace congested {

struct RoutingEdge {
  std::size_t from = 0;
  std::size_t to = 0;
  double mu = 0.0;
};

/// Directed multigraph with a source and a sink; edges are identified by
/// their position in `edges`.
struct RoutingGraph {
  std::vector<std::string> vertices;
  std::vector<RoutingEdge> edges;
  std::size_t source = 0;
  std::size_t sink = 0;

  void validate() const {
    const std::size_t n = vertices.size();
    if (source >= n || sink >= n) throw std::domain_error("RoutingGraph: source or sink not a vertex");
    if (source == sink) throw std::domain_error("RoutingGraph: source equals sink");
    for (const RoutingEdge& e : edges) {
      if (e.from >= n || e.to >= n) throw std::domain_error("RoutingGraph: edge endpoint not a vertex");
      if (!(e.mu >= 0.0 && e.mu <= 1.0)) throw std::invalid_argument("RoutingGraph: edge mean outside [0, 1]");
    }
  }
};

/// All simple source -> sink paths as edge-index lists, in lexicographic
/// order of those lists. Throws std::domain_error when none exist and
/// capacity_error past `max_paths`.
inline std::vector<std::vector<std::size_t>> enumerate_st_paths(const RoutingGraph& g,
                                                                std::size_t max_paths = 100'000) {
  g.validate();
  std::vector<std::vector<std::size_t>> out_edges(g.vertices.size());
  for (std::size_t e = 0; e < g.edges.size(); ++e) out_edges[g.edges[e].from].push_back(e);

  std::vector<std::vector<std::size_t>> paths;
  std::vector<std::size_t> current;
  std::vector<char> on_path(g.vertices.size(), 0);
  auto dfs = [&](auto&& self, std::size_t u) -> void {
    if (u == g.sink) {
      if (paths.size() == max_paths) throw capacity_error("enumerate_st_paths: more than " + std::to_string(max_paths) + " paths");
      paths.push_back(current);
      return;
    }
    on_path[u] = 1;
    for (std::size_t e : out_edges[u]) {
      const std::size_t v = g.edges[e].to;
      if (on_path[v]) continue;
      current.push_back(e);
      self(self, v);
      current.pop_back();
    }
    on_path[u] = 0;
  };
  dfs(dfs, g.source);
  if (paths.empty()) throw std::domain_error("enumerate_st_paths: no path from source to sink");
  return paths;
}

/// Routing problem with arms = enumerated s-t paths.
///
/// Paths shorter than the longest one (L) are padded with synthetic edges
/// of mean 0 that never congest and are observed without noise; pad edge k
/// fills slot k of the padding and is shared by every path that needs it.
/// Edge rows 0..E-1 are the graph's edges, pads follow.
class RoutingInstance {
 public:
  RoutingInstance(RoutingGraph graph, std::size_t window, std::optional<CongestionTable> congestion = std::nullopt,
                  double noise_sigma = 1.0, std::vector<ArmId> initial_window = {},
                  std::size_t max_paths = 100'000)
      : graph_(std::move(graph)), window_(window), noise_sigma_(noise_sigma), initial_window_(std::move(initial_window)) {
    if (window_ == 0) throw std::invalid_argument("RoutingInstance: window must be positive");
    if (!(noise_sigma_ >= 0.0)) throw std::invalid_argument("RoutingInstance: negative noise sigma");
    const auto raw = enumerate_st_paths(graph_, max_paths);
    n_real_ = graph_.edges.size();
    std::size_t shortest = raw.front().size();
    for (const auto& p : raw) {
      length_ = std::max(length_, p.size());
      shortest = std::min(shortest, p.size());
    }
    n_edges_ = n_real_ + (length_ - shortest);
    for (const auto& p : raw) {
      std::vector<std::size_t> padded = p;
      for (std::size_t k = 0; padded.size() < length_; ++k) padded.push_back(n_real_ + k);
      paths_.push_back(std::move(padded));
    }
    incidence_.assign(paths_.size() * n_edges_, 0);
    for (std::size_t p = 0; p < paths_.size(); ++p)
      for (std::size_t e : paths_[p]) incidence_[p * n_edges_ + e] = 1;

    std::vector<double> rows(n_edges_ * (window_ + 1), 1.0);
    if (congestion) {
      if (congestion->n_arms() != n_real_ || congestion->window() != window_)
        throw std::invalid_argument("RoutingInstance: congestion table must be edges x (window + 1)");
      for (std::size_t e = 0; e < n_real_; ++e)
        for (std::size_t j = 0; j <= window_; ++j) rows[e * (window_ + 1) + j] = (*congestion)(e, j);
    } else {
      for (std::size_t e = 0; e < n_real_; ++e)
        for (std::size_t j = 0; j <= window_; ++j)
          rows[e * (window_ + 1) + j] = 1.0 / static_cast<double>(std::max<std::size_t>(1, j));
    }
    congestion_.emplace(n_edges_, window_, std::move(rows));
    if (!initial_window_.empty()) (void)initial_history();
  }

  const RoutingGraph& graph() const { return graph_; }
  std::size_t window() const { return window_; }
  double noise_sigma() const { return noise_sigma_; }
  std::size_t n_paths() const { return paths_.size(); }
  /// Common padded path length L.
  std::size_t path_length() const { return length_; }
  /// Graph edges plus pad edges.
  std::size_t n_edges() const { return n_edges_; }
  std::size_t n_real_edges() const { return n_real_; }
  bool is_pad(std::size_t e) const { return e >= n_real_; }
  const std::vector<std::size_t>& path(ArmId p) const { return paths_.at(p); }
  bool uses(ArmId p, std::size_t e) const { return incidence_[p * n_edges_ + e] != 0; }
  const CongestionTable& congestion() const { return *congestion_; }

  double edge_mean(std::size_t e) const { return is_pad(e) ? 0.0 : graph_.edges[e].mu; }
  double edge_reward(std::size_t e, std::size_t j) const { return (*congestion_)(e, j) * edge_mean(e); }

  History initial_history() const {
    if (initial_window_.empty()) return History::filled(paths_.size(), window_, 0);
    if (initial_window_.size() != window_)
      throw std::invalid_argument("RoutingInstance: initial history length differs from window");
    return History(paths_.size(), initial_window_);
  }

  /// #(h, e): number of window paths containing e.
  std::size_t edge_count(std::span<const ArmId> window, std::size_t e) const {
    std::size_t c = 0;
    for (ArmId p : window) c += incidence_[p * n_edges_ + e];
    return c;
  }

  /// True (edge, count) reward table, rows = n_edges(), cols = window + 1.
  std::vector<double> edge_reward_table() const {
    std::vector<double> table;
    table.reserve(n_edges_ * (window_ + 1));
    for (std::size_t e = 0; e < n_edges_; ++e)
      for (std::size_t j = 0; j <= window_; ++j) table.push_back(edge_reward(e, j));
    return table;
  }

  double mean_path_reward(const History& h, ArmId p) const {
    double total = 0.0;
    for (std::size_t e : path(p)) total += edge_reward(e, edge_count(h.window(), e));
    return total;
  }

 private:
  RoutingGraph graph_;
  std::size_t window_;
  double noise_sigma_;
  std::vector<ArmId> initial_window_;
  std::size_t n_real_ = 0;
  std::size_t n_edges_ = 0;
  std::size_t length_ = 0;
  std::vector<std::vector<std::size_t>> paths_;
  std::vector<char> incidence_;
  std::optional<CongestionTable> congestion_;
};

struct PathReward {
  double total = 0.0;
  std::vector<double> per_edge;  // aligned with inst.path(p)
};

/// Per-edge noisy rewards f(e, #(h, e)) * mu_e + eps for the edges of path
/// p; pad edges yield exactly 0.
inline PathReward path_reward(const RoutingInstance& inst, const History& h, ArmId p, Rng& rng) {
  PathReward out;
  for (std::size_t e : inst.path(p)) {
    double r = 0.0;
    if (!inst.is_pad(e)) {
      const double eps = rng.normal();
      r = inst.edge_reward(e, inst.edge_count(h.window(), e)) + inst.noise_sigma() * eps;
    }
    out.per_edge.push_back(r);
    out.total += r;
  }
  return out;
}

/// Path-history MDP: states are windows of path indices, actions are paths,
/// r[s][p] = sum over e in p of edge_table(e, #(s, e)).
inline DeterministicMdp build_st_mdp(const RoutingInstance& inst, std::span<const double> edge_table,
                                     const PlannerLimits& limits = {}) {
  const std::size_t cols = inst.window() + 1;
  if (edge_table.size() != inst.n_edges() * cols)
    throw std::invalid_argument("build_st_mdp: edge table must be edges x (window + 1)");
  return build_history_mdp(
      inst.n_paths(), inst.window(),
      [&](std::span<const ArmId> w, ArmId p) {
        double total = 0.0;
        for (std::size_t e : inst.path(p)) total += edge_table[e * cols + inst.edge_count(w, e)];
        return total;
      },
      limits);
}

struct RoutingRun {
  RunTrace trace;
  CountTables counts;
};

/// Optimistic episodic learner over s-t paths with per-(edge, count)
/// estimates. Pad edges are known to pay 0 and are planned at 0, but are
/// still counted. An episode ends once any (edge, count) pair played in the
/// round reaches its doubling threshold.
inline RoutingRun run_carmab_st(const RoutingInstance& inst, const CarmabConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t window = inst.window();
  const std::size_t rows = inst.n_edges();
  const std::vector<double> truth = inst.edge_reward_table();
  const double arm_factor = static_cast<double>(inst.path_length() * rows);
  const HistoryCodec codec(inst.n_paths(), window, cfg.limits.max_states);

  History history = inst.initial_history();
  std::size_t state = codec.encode(history);
  std::vector<std::size_t> edge_counts(rows, 0);
  for (ArmId p : history.window())
    for (std::size_t e : inst.path(p)) ++edge_counts[e];

  RoutingRun out{RunTrace{}, CountTables(rows, window + 1)};
  CountTables& tables = out.counts;
  RunTrace& run = out.trace;
  run.steps.reserve(cfg.horizon);
  std::vector<std::size_t> played_counts;
  std::size_t t = 1;
  while (t <= cfg.horizon) {
    tables.roll_over();
    const RewardEstimate est = estimate_rewards(tables, t, arm_factor, window, cfg.delta, cfg.width_constant);
    std::vector<double> optimistic = optimistic_rewards(est);
    for (std::size_t e = inst.n_real_edges(); e < rows; ++e)
      for (std::size_t j = 0; j <= window; ++j) optimistic[e * (window + 1) + j] = 0.0;
    const DeterministicMdp mdp = build_st_mdp(inst, optimistic, cfg.limits);
    const CyclePlan cycle = karp_max_mean_cycle(mdp, cfg.limits);
    const Policy policy = policy_from_cycle(mdp, cycle);

    const std::size_t episode = run.episodes.size();
    const bool last_allowed = cfg.max_episodes != 0 && episode + 1 >= cfg.max_episodes;
    EpisodeRecord record{t, 0, cycle.rho, est.covers(truth)};
    while (t <= cfg.horizon) {
      const ArmId p = policy(state);
      const std::vector<std::size_t>& edges = inst.path(p);
      played_counts.clear();
      double mean = 0.0;
      for (std::size_t e : edges) {
        played_counts.push_back(edge_counts[e]);
        mean += inst.edge_reward(e, edge_counts[e]);
      }
      const PathReward observed = path_reward(inst, history, p, rng);
      run.steps.push_back({p, observed.total, mean, episode});
      bool stop = false;
      for (std::size_t i = 0; i < edges.size(); ++i) {
        tables.update(edges[i], played_counts[i], observed.per_edge[i]);
        stop = stop || tables.doubled(edges[i], played_counts[i]);
      }
      for (std::size_t e : inst.path(history[0])) --edge_counts[e];
      for (std::size_t e : edges) ++edge_counts[e];
      history.advance(p);
      state = codec.successor(state, p);
      ++t;
      ++record.length;
      if (!last_allowed && stop) break;
    }
    run.episodes.push_back(record);
  }
  return out;
}

}  // namespace congested
