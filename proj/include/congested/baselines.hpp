#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "congested/env.hpp"
#include "congested/rng.hpp"
#include "congested/trace.hpp"

namespace congested {

// Congestion-unaware and myopic reference learners. They share the trace
// schema with the optimistic learners; episode is always 0.

/// UCB1 on raw observed rewards, ignoring the history: play each arm once,
/// then argmax mean + sqrt(2 ln t / n).
inline RunTrace baseline_ucb1(const MabInstance& inst, std::size_t horizon, Rng& rng) {
  const std::size_t K = inst.n_arms;
  std::vector<std::uint64_t> plays(K, 0);
  std::vector<double> sums(K, 0.0);
  History history = inst.initial_history();
  RunTrace run;
  run.steps.reserve(horizon);
  for (std::size_t t = 1; t <= horizon; ++t) {
    ArmId choice = 0;
    if (t <= K) {
      choice = t - 1;
    } else {
      double best = -std::numeric_limits<double>::infinity();
      const double log_t = std::log(static_cast<double>(t));
      for (ArmId a = 0; a < K; ++a) {
        const double n = static_cast<double>(plays[a]);
        const double index = sums[a] / n + std::sqrt(2.0 * log_t / n);
        if (index > best) {
          best = index;
          choice = a;
        }
      }
    }
    const double observed = sample_reward(inst, history, choice, rng);
    run.steps.push_back({choice, observed, mean_reward(inst, history, choice), 0});
    ++plays[choice];
    sums[choice] += observed;
    history.advance(choice);
  }
  return run;
}

/// Uniformly random arm every round.
inline RunTrace baseline_random(const MabInstance& inst, std::size_t horizon, Rng& rng) {
  History history = inst.initial_history();
  RunTrace run;
  run.steps.reserve(horizon);
  for (std::size_t t = 1; t <= horizon; ++t) {
    const ArmId choice = rng.below(inst.n_arms);
    const double observed = sample_reward(inst, history, choice, rng);
    run.steps.push_back({choice, observed, mean_reward(inst, history, choice), 0});
    history.advance(choice);
  }
  return run;
}

/// One-step greedy on running (a, j) means: argmax_a r_hat(a, #(h_t, a)).
/// A pair never observed counts as +infinity so each is tried once.
inline RunTrace baseline_greedy(const MabInstance& inst, std::size_t horizon, Rng& rng) {
  const std::size_t cols = inst.window + 1;
  std::vector<std::uint64_t> plays(inst.n_arms * cols, 0);
  std::vector<double> sums(inst.n_arms * cols, 0.0);
  History history = inst.initial_history();
  RunTrace run;
  run.steps.reserve(horizon);
  for (std::size_t t = 1; t <= horizon; ++t) {
    ArmId choice = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (ArmId a = 0; a < inst.n_arms; ++a) {
      const std::size_t i = a * cols + history.count(a);
      const double value = plays[i] == 0 ? std::numeric_limits<double>::infinity()
                                         : sums[i] / static_cast<double>(plays[i]);
      if (value > best) {
        best = value;
        choice = a;
      }
    }
    const std::size_t j = history.count(choice);
    const double observed = sample_reward(inst, history, choice, rng);
    run.steps.push_back({choice, observed, inst.pair_reward(choice, j), 0});
    ++plays[choice * cols + j];
    sums[choice * cols + j] += observed;
    history.advance(choice);
  }
  return run;
}

}  // namespace congested
