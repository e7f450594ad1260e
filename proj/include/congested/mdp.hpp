#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "congested/env.hpp"
#include "congested/errors.hpp"

namespace congested {

/// Size limits for the planners. Karp keeps an (n + 1) x n table and the
/// finite-horizon DP a T x n argmax table; both count against max_table_cells.
struct PlannerLimits {
  std::size_t max_states = 1'000'000;
  std::size_t max_table_cells = 50'000'000;
};

/// Absolute tolerance for comparing cycle means.
inline constexpr double kCycleTolerance = 1e-12;

/// Bijection between windows over `n_symbols` symbols and state indices.
/// The window is read as a base-`n_symbols` integer with the oldest entry as
/// the most significant digit, so appending an action is
/// next = (s mod n^(window-1)) * n + a.
class HistoryCodec {
 public:
  HistoryCodec(std::size_t n_symbols, std::size_t window, std::size_t max_states = PlannerLimits{}.max_states)
      : n_symbols_(n_symbols), window_(window) {
    if (n_symbols == 0 || window == 0)
      throw std::invalid_argument("HistoryCodec: symbols and window must be positive");
    std::size_t n = 1;
    for (std::size_t i = 0; i < window; ++i) {
      if (n > max_states / n_symbols)
        throw capacity_error("history state space " + std::to_string(n_symbols) + "^" +
                             std::to_string(window) + " exceeds cap " + std::to_string(max_states));
      n *= n_symbols;
    }
    n_states_ = n;
    shift_modulus_ = n / n_symbols;
  }

  std::size_t n_symbols() const { return n_symbols_; }
  std::size_t window() const { return window_; }
  std::size_t n_states() const { return n_states_; }

  std::size_t encode(std::span<const ArmId> window) const {
    if (window.size() != window_) throw std::invalid_argument("HistoryCodec: window length mismatch");
    std::size_t s = 0;
    for (ArmId a : window) {
      if (a >= n_symbols_) throw std::domain_error("HistoryCodec: symbol out of range");
      s = s * n_symbols_ + a;
    }
    return s;
  }

  std::size_t encode(const History& h) const { return encode(h.window()); }

  void decode_into(std::size_t s, std::span<ArmId> out) const {
    for (std::size_t i = window_; i-- > 0;) {
      out[i] = s % n_symbols_;
      s /= n_symbols_;
    }
  }

  History decode(std::size_t s) const {
    if (s >= n_states_) throw std::domain_error("HistoryCodec: state out of range");
    std::vector<ArmId> w(window_);
    decode_into(s, w);
    return History(n_symbols_, std::move(w));
  }

  std::size_t successor(std::size_t s, ArmId a) const { return (s % shift_modulus_) * n_symbols_ + a; }

 private:
  std::size_t n_symbols_;
  std::size_t window_;
  std::size_t n_states_ = 1;
  std::size_t shift_modulus_ = 1;
};

/// Deterministic MDP as flat next-state and reward tables indexed
/// [s * n_actions + a]. History MDPs carry their codec.
struct DeterministicMdp {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::vector<std::size_t> next;
  std::vector<double> reward;
  std::optional<HistoryCodec> codec;

  std::size_t next_state(std::size_t s, ArmId a) const { return next[s * n_actions + a]; }
  double reward_at(std::size_t s, ArmId a) const { return reward[s * n_actions + a]; }

  double max_reward() const { return *std::max_element(reward.begin(), reward.end()); }

  void validate() const {
    if (n_states == 0 || n_actions == 0) throw std::invalid_argument("DeterministicMdp: empty");
    if (next.size() != n_states * n_actions || reward.size() != n_states * n_actions)
      throw std::invalid_argument("DeterministicMdp: table size mismatch");
    for (std::size_t v : next)
      if (v >= n_states) throw std::invalid_argument("DeterministicMdp: transition out of range");
  }
};

/// A stationary deterministic policy: one action per state.
struct Policy {
  std::vector<ArmId> action_of;

  ArmId operator()(std::size_t s) const { return action_of.at(s); }
  std::size_t size() const { return action_of.size(); }
};

/// Maximum-mean cycle: its mean (the optimal gain) and one achieving cycle.
/// cycle_actions[i] leads from cycle_states[i] to cycle_states[i + 1]
/// (cyclically).
struct CyclePlan {
  double rho = 0.0;
  std::vector<std::size_t> cycle_states;
  std::vector<ArmId> cycle_actions;

  double cycle_mean(const DeterministicMdp& mdp) const {
    double total = 0.0;
    for (std::size_t i = 0; i < cycle_states.size(); ++i)
      total += mdp.reward_at(cycle_states[i], cycle_actions[i]);
    return total / static_cast<double>(cycle_states.size());
  }

  bool closes(const DeterministicMdp& mdp) const {
    if (cycle_states.empty() || cycle_states.size() != cycle_actions.size()) return false;
    for (std::size_t i = 0; i < cycle_states.size(); ++i) {
      const std::size_t expected = cycle_states[(i + 1) % cycle_states.size()];
      if (mdp.next_state(cycle_states[i], cycle_actions[i]) != expected) return false;
    }
    return true;
  }
};

/// History MDP over `n_symbols` actions with a window of `window`; the
/// reward of (state, action) is reward_fn(decoded window, action).
template <typename RewardFn>
DeterministicMdp build_history_mdp(std::size_t n_symbols, std::size_t window, RewardFn&& reward_fn,
                                   const PlannerLimits& limits = {}) {
  HistoryCodec codec(n_symbols, window, limits.max_states);
  DeterministicMdp mdp;
  mdp.n_states = codec.n_states();
  mdp.n_actions = n_symbols;
  mdp.next.resize(mdp.n_states * n_symbols);
  mdp.reward.resize(mdp.n_states * n_symbols);
  std::vector<ArmId> digits(window);
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    codec.decode_into(s, digits);
    for (ArmId a = 0; a < n_symbols; ++a) {
      mdp.next[s * n_symbols + a] = codec.successor(s, a);
      mdp.reward[s * n_symbols + a] = reward_fn(std::span<const ArmId>(digits), a);
    }
  }
  mdp.codec = codec;
  return mdp;
}

/// The congested-MAB MDP: r[s][a] = reward_table(a, #(s, a)), where
/// reward_table is row-major K x (window + 1).
inline DeterministicMdp build_mdp(std::size_t n_arms, std::size_t window, std::span<const double> reward_table,
                                  const PlannerLimits& limits = {}) {
  if (reward_table.size() != n_arms * (window + 1))
    throw std::invalid_argument("build_mdp: reward table must be K x (window + 1)");
  std::vector<std::size_t> counts(n_arms);
  return build_history_mdp(
      n_arms, window,
      [&](std::span<const ArmId> w, ArmId a) {
        // Actions of one state are visited consecutively starting at 0.
        if (a == 0) {
          std::fill(counts.begin(), counts.end(), 0);
          for (ArmId b : w) ++counts[b];
        }
        return reward_table[a * (window + 1) + counts[a]];
      },
      limits);
}

namespace detail {

/// Incoming edges of every state, grouped by target, each group ordered by
/// (source state, action).
struct ReverseEdges {
  std::vector<std::size_t> offset;  // n_states + 1
  std::vector<std::size_t> edge;    // s * n_actions + a

  explicit ReverseEdges(const DeterministicMdp& mdp) : offset(mdp.n_states + 1, 0), edge(mdp.next.size()) {
    for (std::size_t v : mdp.next) ++offset[v + 1];
    for (std::size_t v = 0; v < mdp.n_states; ++v) offset[v + 1] += offset[v];
    std::vector<std::size_t> fill(offset.begin(), offset.end() - 1);
    for (std::size_t e = 0; e < mdp.next.size(); ++e) edge[fill[mdp.next[e]]++] = e;
  }

  std::span<const std::size_t> into(std::size_t v) const {
    return std::span<const std::size_t>(edge).subspan(offset[v], offset[v + 1] - offset[v]);
  }
};

}  // namespace detail

/// Karp's maximum-mean-cycle algorithm.
///
/// F_0(v) = 0 for every state; F_k(v) = max over edges (u, a) -> v of
/// F_{k-1}(u) + r(u, a); rho* = max_v min_k (F_n(v) - F_k(v)) / (n - k).
/// Starting every walk for free is valid on any graph: it equals running
/// the classical single-source version from a virtual source.
///
/// The returned cycle is the first repeated state on the maximizing n-edge
/// walk into the argmax state, rotated to start at its lowest state index.
/// Ties: lowest argmax state (within kCycleTolerance), and among equal
/// predecessors the lowest (state, action).
inline CyclePlan karp_max_mean_cycle(const DeterministicMdp& mdp, const PlannerLimits& limits = {}) {
  mdp.validate();
  const std::size_t n = mdp.n_states;
  if ((n + 1) > limits.max_table_cells / n)
    throw capacity_error("karp_max_mean_cycle: (n + 1) * n table exceeds cap for n = " + std::to_string(n));
  if (mdp.next.size() > std::numeric_limits<std::uint32_t>::max())
    throw capacity_error("karp_max_mean_cycle: too many edges");

  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  const detail::ReverseEdges rev(mdp);

  std::vector<double> best((n + 1) * n, kNegInf);
  std::vector<std::uint32_t> via((n + 1) * n, 0);
  std::fill(best.begin(), best.begin() + static_cast<std::ptrdiff_t>(n), 0.0);

  for (std::size_t k = 1; k <= n; ++k) {
    const double* prev = &best[(k - 1) * n];
    double* cur = &best[k * n];
    std::uint32_t* cur_via = &via[k * n];
    for (std::size_t v = 0; v < n; ++v) {
      for (std::size_t e : rev.into(v)) {
        const std::size_t u = e / mdp.n_actions;
        if (prev[u] == kNegInf) continue;
        const double cand = prev[u] + mdp.reward[e];
        if (cand > cur[v]) {
          cur[v] = cand;
          cur_via[v] = static_cast<std::uint32_t>(e);
        }
      }
    }
  }

  std::vector<double> score(n, kNegInf);
  double rho = kNegInf;
  for (std::size_t v = 0; v < n; ++v) {
    const double fn = best[n * n + v];
    if (fn == kNegInf) continue;
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k) {
      const double fk = best[k * n + v];
      if (fk == kNegInf) continue;
      worst = std::min(worst, (fn - fk) / static_cast<double>(n - k));
    }
    score[v] = worst;
    rho = std::max(rho, worst);
  }
  if (rho == kNegInf) throw std::logic_error("karp_max_mean_cycle: graph has no cycle");

  std::size_t target = 0;
  while (score[target] < rho - kCycleTolerance) ++target;

  // Walk back along the maximizing n-edge walk; stop at the first repeat.
  std::vector<std::size_t> seen_at(n, std::numeric_limits<std::size_t>::max());
  std::vector<std::size_t> walk_states{target};
  std::vector<ArmId> walk_actions;  // walk_states[i + 1] --walk_actions[i]--> walk_states[i]
  seen_at[target] = 0;
  std::size_t v = target;
  for (std::size_t k = n; k >= 1; --k) {
    const std::size_t e = via[k * n + v];
    const std::size_t u = e / mdp.n_actions;
    walk_actions.push_back(e % mdp.n_actions);
    v = u;
    if (seen_at[v] != std::numeric_limits<std::size_t>::max()) {
      const std::size_t first = seen_at[v];
      CyclePlan plan;
      plan.rho = rho;
      // Forward order runs from the newest position back down to `first`.
      walk_states.push_back(v);
      for (std::size_t i = walk_states.size() - 1; i > first; --i) {
        plan.cycle_states.push_back(walk_states[i]);
        plan.cycle_actions.push_back(walk_actions[i - 1]);
      }
      const auto lowest = std::min_element(plan.cycle_states.begin(), plan.cycle_states.end());
      const auto shift = lowest - plan.cycle_states.begin();
      std::rotate(plan.cycle_states.begin(), lowest, plan.cycle_states.end());
      std::rotate(plan.cycle_actions.begin(), plan.cycle_actions.begin() + shift, plan.cycle_actions.end());
      assert(plan.closes(mdp));
      return plan;
    }
    seen_at[v] = walk_states.size();
    walk_states.push_back(v);
  }
  throw std::logic_error("karp_max_mean_cycle: no repeated state on an n-edge walk");
}

/// On-cycle states follow the cycle; every other state takes the first
/// action of a shortest route into the cycle, found by multi-source BFS over
/// reversed transitions. Sources enter the queue in ascending state order
/// and predecessors are scanned in (state, action) order.
inline Policy policy_from_cycle(const DeterministicMdp& mdp, const CyclePlan& plan) {
  mdp.validate();
  if (!plan.closes(mdp)) throw std::invalid_argument("policy_from_cycle: plan is not a cycle of this MDP");
  constexpr std::size_t kUnset = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> choice(mdp.n_states, kUnset);
  std::vector<std::size_t> sources;
  for (std::size_t i = 0; i < plan.cycle_states.size(); ++i) {
    choice[plan.cycle_states[i]] = plan.cycle_actions[i];
    sources.push_back(plan.cycle_states[i]);
  }
  std::sort(sources.begin(), sources.end());
  std::deque<std::size_t> queue(sources.begin(), sources.end());
  const detail::ReverseEdges rev(mdp);
  while (!queue.empty()) {
    const std::size_t v = queue.front();
    queue.pop_front();
    for (std::size_t e : rev.into(v)) {
      const std::size_t u = e / mdp.n_actions;
      if (choice[u] != kUnset) continue;
      choice[u] = e % mdp.n_actions;
      queue.push_back(u);
    }
  }
  Policy policy;
  policy.action_of.reserve(mdp.n_states);
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    if (choice[s] == kUnset)
      throw std::logic_error("policy_from_cycle: state " + std::to_string(s) + " cannot reach the cycle");
    policy.action_of.push_back(choice[s]);
  }
  return policy;
}

/// Optimal total mean reward over T steps from `start` with the realizing
/// action sequence.
struct HorizonPlan {
  double value = 0.0;
  std::vector<ArmId> actions;
};

/// Backward induction V_t(s) = max_a r(s, a) + V_{t+1}(next(s, a)),
/// V_{T+1} = 0. Ties go to the lowest action.
inline HorizonPlan finite_horizon_dp(const DeterministicMdp& mdp, std::size_t horizon, std::size_t start,
                                     const PlannerLimits& limits = {}) {
  mdp.validate();
  if (horizon == 0) throw std::invalid_argument("finite_horizon_dp: horizon must be >= 1");
  if (start >= mdp.n_states) throw std::domain_error("finite_horizon_dp: start state out of range");
  const std::size_t n = mdp.n_states;
  if (horizon > limits.max_table_cells / n)
    throw capacity_error("finite_horizon_dp: horizon x states exceeds cap");

  std::vector<double> value(n, 0.0), next_value(n, 0.0);
  std::vector<std::uint32_t> argmax(horizon * n, 0);
  for (std::size_t t = horizon; t-- > 0;) {
    std::swap(value, next_value);
    for (std::size_t s = 0; s < n; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      std::uint32_t best_a = 0;
      for (ArmId a = 0; a < mdp.n_actions; ++a) {
        const double cand = mdp.reward_at(s, a) + next_value[mdp.next_state(s, a)];
        if (cand > best) {
          best = cand;
          best_a = static_cast<std::uint32_t>(a);
        }
      }
      value[s] = best;
      argmax[t * n + s] = best_a;
    }
  }
  HorizonPlan plan;
  plan.value = value[start];
  plan.actions.reserve(horizon);
  std::size_t s = start;
  for (std::size_t t = 0; t < horizon; ++t) {
    const ArmId a = argmax[t * n + s];
    plan.actions.push_back(a);
    s = mdp.next_state(s, a);
  }
  return plan;
}

/// Largest shortest-path distance over ordered pairs of distinct states, by
/// BFS from every state. std::nullopt means some pair is unreachable.
inline std::optional<std::size_t> diameter(const DeterministicMdp& mdp) {
  mdp.validate();
  const std::size_t n = mdp.n_states;
  constexpr std::size_t kUnseen = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> dist(n);
  std::vector<std::size_t> queue;
  queue.reserve(n);
  std::size_t worst = 0;
  for (std::size_t src = 0; src < n; ++src) {
    std::fill(dist.begin(), dist.end(), kUnseen);
    queue.clear();
    dist[src] = 0;
    queue.push_back(src);
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const std::size_t u = queue[head];
      for (ArmId a = 0; a < mdp.n_actions; ++a) {
        const std::size_t v = mdp.next_state(u, a);
        if (dist[v] != kUnseen) continue;
        dist[v] = dist[u] + 1;
        queue.push_back(v);
      }
    }
    if (queue.size() != n) return std::nullopt;
    worst = std::max(worst, *std::max_element(dist.begin(), dist.end()));
  }
  return worst;
}

/// Long-run average reward of a stationary policy from `start`: follows the
/// trajectory to its first repeated state and averages over that cycle.
inline double average_reward_of_policy(const DeterministicMdp& mdp, const Policy& policy, std::size_t start) {
  mdp.validate();
  if (policy.size() != mdp.n_states) throw std::invalid_argument("average_reward_of_policy: policy size mismatch");
  constexpr std::size_t kUnseen = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> visited_at(mdp.n_states, kUnseen);
  std::vector<double> rewards;
  std::size_t s = start;
  while (visited_at[s] == kUnseen) {
    visited_at[s] = rewards.size();
    const ArmId a = policy(s);
    rewards.push_back(mdp.reward_at(s, a));
    s = mdp.next_state(s, a);
  }
  double total = 0.0;
  for (std::size_t i = visited_at[s]; i < rewards.size(); ++i) total += rewards[i];
  return total / static_cast<double>(rewards.size() - visited_at[s]);
}

/// Per-round mean rewards of following `policy` for `horizon` rounds from
/// `start`.
inline std::vector<double> simulate_policy_rewards(const DeterministicMdp& mdp, const Policy& policy,
                                                   std::size_t start, std::size_t horizon) {
  std::vector<double> rewards;
  rewards.reserve(horizon);
  std::size_t s = start;
  for (std::size_t t = 0; t < horizon; ++t) {
    const ArmId a = policy(s);
    rewards.push_back(mdp.reward_at(s, a));
    s = mdp.next_state(s, a);
  }
  return rewards;
}

}  // namespace congested
