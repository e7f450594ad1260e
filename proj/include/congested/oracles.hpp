#pragma once

// Brute-force reference computations. Nothing here shares code with the
// planners it is used to check: cycles are enumerated explicitly, action
// sequences exhaustively, and paths by plain vertex DFS.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "congested/mdp.hpp"

namespace congested::oracle {

/// Maximum mean over all simple cycles, by DFS from each start vertex over
/// vertices with larger index (each cycle is found from its minimum vertex).
/// Parallel edges between the same pair of states are each explored.
/// Returns std::nullopt if more than `budget` cycles would be enumerated.
inline std::optional<double> max_mean_simple_cycle(const DeterministicMdp& mdp,
                                                   std::size_t budget = 50'000'000) {
  const std::size_t n = mdp.n_states;
  double best = -std::numeric_limits<double>::infinity();
  std::size_t found = 0;
  std::vector<char> on_path(n, 0);
  bool exhausted = false;

  std::function<void(std::size_t, std::size_t, double, std::size_t)> dfs =
      [&](std::size_t root, std::size_t v, double sum, std::size_t len) {
        if (exhausted) return;
        for (ArmId a = 0; a < mdp.n_actions; ++a) {
          const std::size_t w = mdp.next_state(v, a);
          const double total = sum + mdp.reward_at(v, a);
          if (w == root) {
            best = std::max(best, total / static_cast<double>(len + 1));
            if (++found > budget) {
              exhausted = true;
              return;
            }
          } else if (w > root && !on_path[w]) {
            on_path[w] = 1;
            dfs(root, w, total, len + 1);
            on_path[w] = 0;
          }
        }
      };
  for (std::size_t root = 0; root < n; ++root) {
    on_path[root] = 1;
    dfs(root, root, 0.0, 0);
    on_path[root] = 0;
    if (exhausted) return std::nullopt;
  }
  return best;
}

/// Maximum cycle mean by bisection on lambda: a cycle with mean > lambda
/// exists iff Bellman-Ford on weights r - lambda still relaxes after n
/// rounds. Polynomial; used where explicit enumeration is too large.
inline double max_mean_cycle_bisection(const DeterministicMdp& mdp, double tol = 1e-11) {
  const std::size_t n = mdp.n_states;
  auto has_cycle_above = [&](double lambda) {
    std::vector<double> dist(n, 0.0);
    for (std::size_t round = 0; round <= n; ++round) {
      bool changed = false;
      for (std::size_t s = 0; s < n; ++s)
        for (ArmId a = 0; a < mdp.n_actions; ++a) {
          const std::size_t t = mdp.next_state(s, a);
          const double cand = dist[s] + mdp.reward_at(s, a) - lambda;
          if (cand > dist[t] + 1e-13) {
            dist[t] = cand;
            changed = true;
          }
        }
      if (!changed) return false;
    }
    return true;
  };
  double lo = *std::min_element(mdp.reward.begin(), mdp.reward.end()) - 1.0;
  double hi = *std::max_element(mdp.reward.begin(), mdp.reward.end()) + 1.0;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    (has_cycle_above(mid) ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Visits every action sequence in [0, n_actions)^length in lexicographic
/// order.
template <typename Visit>
void for_each_sequence(std::size_t n_actions, std::size_t length, Visit&& visit) {
  std::vector<ArmId> seq(length, 0);
  while (true) {
    visit(std::span<const ArmId>(seq));
    std::size_t i = length;
    while (i > 0 && seq[i - 1] + 1 == n_actions) seq[--i] = 0;
    if (i == 0) return;
    ++seq[i - 1];
  }
}

/// Right fold: r_1 + (r_2 + (... + r_T)).
inline double sequence_total(std::span<const double> rewards) {
  double total = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) total = rewards[t] + total;
  return total;
}

/// Best total reward over all action sequences of length `horizon` from
/// `start`. Per-sequence totals are summed last-step-first, the same
/// association order as backward induction, so the maximum is bit-exact.
inline double best_sequence_value(const DeterministicMdp& mdp, std::size_t horizon, std::size_t start) {
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> rewards(horizon);
  for_each_sequence(mdp.n_actions, horizon, [&](std::span<const ArmId> seq) {
    std::size_t s = start;
    for (std::size_t t = 0; t < horizon; ++t) {
      rewards[t] = mdp.reward_at(s, seq[t]);
      s = mdp.next_state(s, seq[t]);
    }
    best = std::max(best, sequence_total(rewards));
  });
  return best;
}

/// Total reward of a fixed action sequence from `start`, right-folded.
inline double sequence_value(const DeterministicMdp& mdp, std::span<const ArmId> actions, std::size_t start) {
  std::vector<double> rewards;
  std::size_t s = start;
  for (ArmId a : actions) {
    rewards.push_back(mdp.reward_at(s, a));
    s = mdp.next_state(s, a);
  }
  return sequence_total(rewards);
}

/// Exhaustive windowed planner with per-step arm scores: reward at step t
/// for arm a with window w is scores[t * K + a] * congestion(a, #(w, a)).
/// Histories are tracked as plain vectors.
inline double best_scored_sequence(std::span<const double> scores, std::size_t n_arms,
                                   const CongestionTable& congestion, const History& start,
                                   std::size_t length) {
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> rewards(length);
  for_each_sequence(n_arms, length, [&](std::span<const ArmId> seq) {
    std::vector<ArmId> window(start.window().begin(), start.window().end());
    for (std::size_t t = 0; t < length; ++t) {
      const ArmId a = seq[t];
      const auto j = static_cast<std::size_t>(std::count(window.begin(), window.end(), a));
      rewards[t] = scores[t * n_arms + a] * congestion(a, j);
      window.erase(window.begin());
      window.push_back(a);
    }
    best = std::max(best, sequence_total(rewards));
  });
  return best;
}

/// Number of simple source -> sink paths in a directed multigraph given as
/// (from, to) vertex pairs, by recursive vertex DFS.
inline std::size_t count_simple_paths(std::size_t n_vertices, std::span<const std::pair<std::size_t, std::size_t>> edges,
                                      std::size_t source, std::size_t sink) {
  std::vector<std::vector<std::size_t>> out(n_vertices);
  for (const auto& [u, v] : edges) out[u].push_back(v);
  std::vector<char> visited(n_vertices, 0);
  std::function<std::size_t(std::size_t)> walk = [&](std::size_t u) -> std::size_t {
    if (u == sink) return 1;
    visited[u] = 1;
    std::size_t total = 0;
    for (std::size_t v : out[u])
      if (!visited[v]) total += walk(v);
    visited[u] = 0;
    return total;
  };
  return walk(source);
}

}  // namespace congested::oracle
