#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "congested/carcb.hpp"
#include "congested/carmab.hpp"
#include "congested/env.hpp"
#include "congested/mdp.hpp"
#include "congested/oracles.hpp"
#include "congested/rng.hpp"

namespace congested {

/// Outcome of one property suite.
struct PropertyResult {
  std::string name;
  std::size_t cases = 0;
  std::size_t failures = 0;
  std::string detail;

  bool passed() const { return cases > 0 && failures == 0; }
};

/// A congestion table with random non-increasing rows in (0, 1].
inline CongestionTable random_congestion(std::size_t n_arms, std::size_t window, Rng& rng) {
  std::vector<double> values;
  values.reserve(n_arms * (window + 1));
  for (std::size_t a = 0; a < n_arms; ++a) {
    double c = 0.5 + 0.5 * rng.uniform_open();
    for (std::size_t j = 0; j <= window; ++j) {
      values.push_back(c);
      c *= 0.3 + 0.7 * rng.uniform_open();
    }
  }
  return CongestionTable(n_arms, window, std::move(values));
}

/// Random MAB instance with K in [1, max_arms] (or [2, ...] when
/// `at_least_two`) and window in [1, max_window].
inline MabInstance random_instance(std::size_t max_arms, std::size_t max_window, Rng& rng, double sigma = 0.1,
                                   bool at_least_two = false) {
  const std::size_t lo = at_least_two ? 2 : 1;
  const std::size_t K = lo + rng.below(max_arms - lo + 1);
  const std::size_t window = 1 + rng.below(max_window);
  std::vector<double> mu(K);
  for (double& m : mu) m = rng.uniform();
  return MabInstance(std::move(mu), random_congestion(K, window, rng), sigma);
}

struct CheckConfig {
  std::uint64_t seed = 1;
  std::size_t karp_instances = 200;
  std::size_t dp_instances = 100;
  std::size_t comparator_instances = 100;
  std::size_t comparator_horizon = 200;
  std::size_t coverage_replications = 200;
  std::size_t coverage_horizon = 5000;
  /// Required fraction of runs covered at every episode start.
  double coverage_target = 0.8;
  double delta = 0.1;
  double width_constant = 10.0;
  double noise_sigma = 1.0;
};

/// BFS diameter of the history MDP must equal the window for K >= 2 (and be
/// at most the window for K = 1) on every (K, window) in the grid.
inline PropertyResult check_diameter(const std::vector<std::size_t>& arms = {1, 2, 3, 4},
                                     const std::vector<std::size_t>& windows = {1, 2, 3}) {
  PropertyResult out{"diameter", 0, 0, {}};
  for (std::size_t K : arms)
    for (std::size_t w : windows) {
      const std::vector<double> table(K * (w + 1), 1.0);
      const DeterministicMdp mdp = build_mdp(K, w, table);
      const std::optional<std::size_t> d = diameter(mdp);
      ++out.cases;
      const bool ok = d && (K >= 2 ? *d == w : *d <= w);
      if (!ok) {
        ++out.failures;
        out.detail += "K=" + std::to_string(K) + " window=" + std::to_string(w) + " diameter=" +
                      (d ? std::to_string(*d) : std::string("inf")) + "; ";
      }
    }
  return out;
}

/// Diameter bound on a caller-supplied MDP; the negative-control entry point.
inline PropertyResult check_diameter_of(const DeterministicMdp& mdp, std::size_t bound) {
  PropertyResult out{"diameter", 0, 0, {}};
  out.cases = 1;
  const std::optional<std::size_t> d = diameter(mdp);
  if (!d || *d > bound) {
    out.failures = 1;
    out.detail = "diameter=" + (d ? std::to_string(*d) : std::string("inf")) + " bound=" + std::to_string(bound);
  }
  return out;
}

/// Karp gain against exhaustive simple-cycle enumeration (within 1e-9), and
/// the extracted cycle must close and carry that mean.
inline PropertyResult check_karp(const CheckConfig& cfg) {
  PropertyResult out{"karp_vs_enumeration", 0, 0, {}};
  Rng rng = Rng::derive(cfg.seed, 101);
  for (std::size_t i = 0; i < cfg.karp_instances; ++i) {
    const MabInstance inst = random_instance(3, 2, rng);
    const std::vector<double> table = inst.reward_table();
    const DeterministicMdp mdp = build_mdp(inst.n_arms, inst.window, table);
    const CyclePlan plan = karp_max_mean_cycle(mdp);
    const std::optional<double> exact = oracle::max_mean_simple_cycle(mdp);
    ++out.cases;
    if (!exact || std::abs(*exact - plan.rho) > 1e-9 || !plan.closes(mdp) ||
        std::abs(plan.cycle_mean(mdp) - plan.rho) > 1e-9) {
      ++out.failures;
      out.detail += "instance " + std::to_string(i) + "; ";
    }
  }
  return out;
}

/// finite_horizon_dp and dp_plan_known against brute force over all action
/// sequences (exact equality), K <= 3, window <= 2, horizon <= 6.
inline PropertyResult check_dp(const CheckConfig& cfg) {
  PropertyResult out{"dp_vs_bruteforce", 0, 0, {}};
  Rng rng = Rng::derive(cfg.seed, 102);
  for (std::size_t i = 0; i < cfg.dp_instances; ++i) {
    const MabInstance inst = random_instance(3, 2, rng);
    const std::size_t T = 1 + rng.below(6);
    const std::vector<double> table = inst.reward_table();
    const DeterministicMdp mdp = build_mdp(inst.n_arms, inst.window, table);
    const std::size_t start = rng.below(mdp.n_states);
    const HorizonPlan plan = finite_horizon_dp(mdp, T, start);
    ++out.cases;
    if (plan.value != oracle::best_sequence_value(mdp, T, start) ||
        oracle::sequence_value(mdp, plan.actions, start) != plan.value) {
      ++out.failures;
      out.detail += "finite_horizon_dp instance " + std::to_string(i) + "; ";
    }

    const std::size_t d = 1 + rng.below(4);
    const Vector theta = sample_unit_ball(d, rng);
    const ContextSequence ctx = ContextSequence::uniform_normalized(T, inst.n_arms, d, rng);
    const History h0 = mdp.codec->decode(start);
    const WindowPlan known = dp_plan_known(theta, ctx, 0, T, h0, inst.congestion);
    const std::vector<double> scores = linear_scores(theta, ctx, 0, T);
    ++out.cases;
    if (known.value != oracle::best_scored_sequence(scores, inst.n_arms, inst.congestion, h0, T)) {
      ++out.failures;
      out.detail += "dp_plan_known instance " + std::to_string(i) + "; ";
    }
  }
  return out;
}

/// The finite-horizon optimum never beats T * rho* + window * r_max.
inline PropertyResult check_comparator_bound(const CheckConfig& cfg) {
  PropertyResult out{"comparator_bound", 0, 0, {}};
  Rng rng = Rng::derive(cfg.seed, 103);
  for (std::size_t i = 0; i < cfg.comparator_instances; ++i) {
    const MabInstance inst = random_instance(3, 3, rng);
    const std::vector<double> table = inst.reward_table();
    const DeterministicMdp mdp = build_mdp(inst.n_arms, inst.window, table);
    const double rho = karp_max_mean_cycle(mdp).rho;
    const std::size_t start = rng.below(mdp.n_states);
    const double value = finite_horizon_dp(mdp, cfg.comparator_horizon, start).value;
    const double bound = static_cast<double>(cfg.comparator_horizon) * rho +
                         static_cast<double>(inst.window) * mdp.max_reward();
    ++out.cases;
    if (value > bound + 1e-9) {
      ++out.failures;
      out.detail += "instance " + std::to_string(i) + "; ";
    }
  }
  return out;
}

/// Episode count bound K (window + 1)(1 + log2 T) for one run.
inline double episode_bound(std::size_t n_arms, std::size_t window, std::size_t horizon) {
  return static_cast<double>(n_arms * (window + 1)) * (1.0 + std::log2(static_cast<double>(horizon)));
}

/// The fixed K=3, window=2 instance used for coverage runs.
inline MabInstance coverage_instance(double sigma) {
  return MabInstance({0.9, 0.6, 0.3}, reciprocal_congestion(3, 2), sigma);
}

/// CARMAB replications on the coverage instance: fraction of runs whose
/// confidence boxes contain every true (a, j) reward at every episode start,
/// plus the episode bound on each run. Returns {coverage, episodes}.
inline std::pair<PropertyResult, PropertyResult> check_coverage_and_episodes(const CheckConfig& cfg) {
  PropertyResult coverage{"coverage", 0, 0, {}};
  PropertyResult episodes{"episode_bound", 0, 0, {}};
  const MabInstance inst = coverage_instance(cfg.noise_sigma);
  CarmabConfig mc;
  mc.delta = cfg.delta;
  mc.width_constant = cfg.width_constant;
  mc.horizon = cfg.coverage_horizon;
  const double bound = episode_bound(inst.n_arms, inst.window, mc.horizon);
  std::size_t covered = 0;
  for (std::size_t r = 0; r < cfg.coverage_replications; ++r) {
    Rng rng = Rng::derive(cfg.seed + r, 104);
    const RunTrace run = run_carmab(inst, mc, rng);
    if (std::all_of(run.episodes.begin(), run.episodes.end(), [](const EpisodeRecord& e) { return e.covered; }))
      ++covered;
    ++episodes.cases;
    if (static_cast<double>(run.episodes.size()) > bound) {
      ++episodes.failures;
      episodes.detail += "replication " + std::to_string(r) + " episodes=" + std::to_string(run.episodes.size()) + "; ";
    }
  }
  coverage.cases = cfg.coverage_replications;
  const double rate = cfg.coverage_replications ? static_cast<double>(covered) / static_cast<double>(cfg.coverage_replications) : 0.0;
  coverage.detail = "covered " + std::to_string(covered) + "/" + std::to_string(cfg.coverage_replications);
  if (rate < cfg.coverage_target) coverage.failures = cfg.coverage_replications - covered;
  return {coverage, episodes};
}

/// Every property suite in a fixed order.
inline std::vector<PropertyResult> run_check_suite(const CheckConfig& cfg) {
  std::vector<PropertyResult> out;
  out.push_back(check_diameter());
  out.push_back(check_karp(cfg));
  out.push_back(check_dp(cfg));
  out.push_back(check_comparator_bound(cfg));
  auto [coverage, episodes] = check_coverage_and_episodes(cfg);
  out.push_back(std::move(coverage));
  out.push_back(std::move(episodes));
  return out;
}

}  // namespace congested
