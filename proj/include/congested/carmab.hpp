#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "congested/env.hpp"
#include "congested/mdp.hpp"
#include "congested/rng.hpp"
#include "congested/trace.hpp"

namespace congested {

struct CarmabConfig {
  /// Confidence level, in (0, 1).
  double delta = 0.1;
  /// Multiplier on the confidence width.
  double width_constant = 10.0;
  std::size_t horizon = 1000;
  /// After this many episodes the last policy runs to the horizon; 0 = no cap.
  std::size_t max_episodes = 0;
  PlannerLimits limits{};

  void validate() const {
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("CarmabConfig: delta must be in (0, 1)");
    if (!(width_constant > 0.0)) throw std::invalid_argument("CarmabConfig: width_constant must be positive");
    if (horizon == 0) throw std::invalid_argument("CarmabConfig: horizon must be >= 1");
  }
};

/// Play counts and reward sums per (row, count) pair: rows are arms (or
/// edges), columns are window counts 0..window. Episode counters fold into
/// the prior totals at roll_over().
class CountTables {
 public:
  CountTables(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), n_ep_(rows * cols, 0), n_prior_(rows * cols, 0),
        sum_ep_(rows * cols, 0.0), sum_prior_(rows * cols, 0.0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  void update(std::size_t row, std::size_t j, double reward) {
    const std::size_t i = index(row, j);
    ++n_ep_[i];
    sum_ep_[i] += reward;
  }

  void roll_over() {
    for (std::size_t i = 0; i < n_ep_.size(); ++i) {
      n_prior_[i] += n_ep_[i];
      sum_prior_[i] += sum_ep_[i];
      n_ep_[i] = 0;
      sum_ep_[i] = 0.0;
    }
  }

  std::uint64_t episode_count(std::size_t row, std::size_t j) const { return n_ep_[index(row, j)]; }
  std::uint64_t prior_count(std::size_t row, std::size_t j) const { return n_prior_[index(row, j)]; }
  double prior_sum(std::size_t row, std::size_t j) const { return sum_prior_[index(row, j)]; }

  /// In-episode count has reached max(1, prior count).
  bool doubled(std::size_t row, std::size_t j) const {
    const std::size_t i = index(row, j);
    return n_ep_[i] >= std::max<std::uint64_t>(1, n_prior_[i]);
  }

  std::uint64_t total() const {
    std::uint64_t sum = 0;
    for (std::size_t i = 0; i < n_ep_.size(); ++i) sum += n_ep_[i] + n_prior_[i];
    return sum;
  }

 private:
  std::size_t index(std::size_t row, std::size_t j) const {
    if (row >= rows_ || j >= cols_) throw std::domain_error("CountTables: pair out of range");
    return row * cols_ + j;
  }

  std::size_t rows_, cols_;
  std::vector<std::uint64_t> n_ep_, n_prior_;
  std::vector<double> sum_ep_, sum_prior_;
};

inline CountTables update_counts(CountTables tables, std::size_t a, std::size_t j, double reward) {
  tables.update(a, j, reward);
  return tables;
}

/// C * sqrt(log(n_arms * window * t_e / delta) / max(1, N)); the log is
/// clamped at 0. For routing, n_arms is L * E.
inline double confidence_width(std::uint64_t n, std::size_t t_episode, double n_arms, std::size_t window,
                               double delta, double width_constant) {
  if (t_episode == 0) throw std::invalid_argument("confidence_width: t_e must be >= 1");
  const double arg = n_arms * static_cast<double>(window) * static_cast<double>(t_episode) / delta;
  const double log_term = std::max(0.0, std::log(arg));
  return width_constant * std::sqrt(log_term / static_cast<double>(std::max<std::uint64_t>(1, n)));
}

/// Empirical means from completed episodes and their confidence widths.
struct RewardEstimate {
  std::size_t rows = 0, cols = 0;
  std::vector<double> r_hat;
  std::vector<double> width;

  double center(std::size_t row, std::size_t j) const { return r_hat[row * cols + j]; }
  double half_width(std::size_t row, std::size_t j) const { return width[row * cols + j]; }

  /// Every entry of `truth` (same layout) inside [r_hat - w, r_hat + w].
  bool covers(std::span<const double> truth) const {
    for (std::size_t i = 0; i < r_hat.size(); ++i)
      if (std::abs(truth[i] - r_hat[i]) > width[i]) return false;
    return true;
  }
};

inline RewardEstimate estimate_rewards(const CountTables& tables, std::size_t t_episode, double n_arms,
                                       std::size_t window, double delta, double width_constant) {
  RewardEstimate est;
  est.rows = tables.rows();
  est.cols = tables.cols();
  est.r_hat.reserve(est.rows * est.cols);
  est.width.reserve(est.rows * est.cols);
  for (std::size_t r = 0; r < est.rows; ++r)
    for (std::size_t j = 0; j < est.cols; ++j) {
      const std::uint64_t n = tables.prior_count(r, j);
      est.r_hat.push_back(tables.prior_sum(r, j) / static_cast<double>(std::max<std::uint64_t>(1, n)));
      est.width.push_back(confidence_width(n, t_episode, n_arms, window, delta, width_constant));
    }
  return est;
}

/// Upper edge of each confidence box, clipped to [0, 1]. The gain is linear
/// in each (a, j) entry, so the per-entry maximum is the joint maximizer over
/// the box.
inline std::vector<double> optimistic_rewards(const RewardEstimate& est) {
  std::vector<double> out(est.r_hat.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(est.r_hat[i] + est.width[i], 0.0, 1.0);
  return out;
}

struct EpisodePlan {
  CyclePlan cycle;
  Policy policy;
};

/// Optimal stationary policy for a K x (window + 1) reward table.
inline EpisodePlan plan_episode(std::span<const double> reward_table, std::size_t n_arms, std::size_t window,
                                const PlannerLimits& limits = {}) {
  const DeterministicMdp mdp = build_mdp(n_arms, window, reward_table, limits);
  EpisodePlan plan;
  plan.cycle = karp_max_mean_cycle(mdp, limits);
  plan.policy = policy_from_cycle(mdp, plan.cycle);
  return plan;
}

/// Episodic optimistic learner for a congested MAB.
///
/// Each episode: fold the counts, form (a, j) estimates from completed
/// episodes only, plan on the optimistic table, then play the policy until
/// the just-played pair's episode count reaches max(1, prior count).
inline RunTrace run_carmab(const MabInstance& inst, const CarmabConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t K = inst.n_arms;
  const std::size_t window = inst.window;
  const std::vector<double> truth = inst.reward_table();
  const HistoryCodec codec(K, window, cfg.limits.max_states);

  History history = inst.initial_history();
  std::size_t state = codec.encode(history);
  CountTables tables(K, window + 1);

  RunTrace run;
  run.steps.reserve(cfg.horizon);
  std::size_t t = 1;
  while (t <= cfg.horizon) {
    tables.roll_over();
    const RewardEstimate est =
        estimate_rewards(tables, t, static_cast<double>(K), window, cfg.delta, cfg.width_constant);
    const std::vector<double> optimistic = optimistic_rewards(est);
    const EpisodePlan plan = plan_episode(optimistic, K, window, cfg.limits);

    const std::size_t episode = run.episodes.size();
    const bool last_allowed = cfg.max_episodes != 0 && episode + 1 >= cfg.max_episodes;
    EpisodeRecord record{t, 0, plan.cycle.rho, est.covers(truth)};
    while (t <= cfg.horizon) {
      const ArmId a = plan.policy(state);
      const std::size_t j = history.count(a);
      const double observed = sample_reward(inst, history, a, rng);
      run.steps.push_back({a, observed, inst.pair_reward(a, j), episode});
      tables.update(a, j, observed);
      history.advance(a);
      state = codec.successor(state, a);
      ++t;
      ++record.length;
      if (!last_allowed && tables.doubled(a, j)) break;
    }
    run.episodes.push_back(record);
  }
  return run;
}

}  // namespace congested
