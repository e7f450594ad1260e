#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "congested/env.hpp"

namespace congested {

/// One simulated round.
struct StepRecord {
  ArmId action = 0;
  double reward_observed = 0.0;
  double reward_mean = 0.0;
  std::size_t episode = 0;
};

/// Planning-interval diagnostics recorded at each episode (or epoch) start.
struct EpisodeRecord {
  std::size_t start = 0;  // 1-based time step
  std::size_t length = 0;
  double planned_gain = 0.0;
  /// True rewards inside every confidence box at the episode start.
  bool covered = true;
};

/// Output of any learner or baseline: one record per round, in order.
struct RunTrace {
  std::vector<StepRecord> steps;
  std::vector<EpisodeRecord> episodes;

  std::size_t horizon() const { return steps.size(); }

  /// Mean of reward_mean over rounds [from, to] (1-based, inclusive).
  double mean_reward_between(std::size_t from, std::size_t to) const {
    if (from < 1 || to > steps.size() || from > to) throw std::out_of_range("mean_reward_between");
    double total = 0.0;
    for (std::size_t t = from; t <= to; ++t) total += steps[t - 1].reward_mean;
    return total / static_cast<double>(to - from + 1);
  }
};

/// A row of the regret CSV. Cumulative columns are running sums over every
/// round up to t, whether or not intermediate rows are emitted.
struct RegretRow {
  std::size_t t = 0;
  ArmId action = 0;
  double reward_observed = 0.0;
  double reward_mean = 0.0;
  double comparator_mean = 0.0;
  double cum_regret_noisy = 0.0;
  double cum_regret_mean = 0.0;
  double avg_regret_mean = 0.0;
  std::size_t episode = 0;
};

/// Every round up to 1000, then geometric spacing (x1.05), always including
/// the final round.
inline std::vector<std::size_t> logged_time_points(std::size_t horizon, bool thin) {
  std::vector<std::size_t> points;
  if (!thin) {
    points.reserve(horizon);
    for (std::size_t t = 1; t <= horizon; ++t) points.push_back(t);
    return points;
  }
  for (std::size_t t = 1; t <= std::min<std::size_t>(horizon, 1000); ++t) points.push_back(t);
  double next = 1000.0;
  while (true) {
    next *= 1.05;
    const auto t = static_cast<std::size_t>(std::ceil(next));
    if (t >= horizon) break;
    if (t > points.back()) points.push_back(t);
  }
  if (points.empty() || points.back() != horizon) points.push_back(horizon);
  return points;
}

/// Policy regret of a run against a comparator's per-round mean rewards:
/// comparator cumulative minus the algorithm's cumulative, with the
/// algorithm side taken as observed (noisy) or mean rewards.
class RegretTrace {
 public:
  RegretTrace(const RunTrace& run, std::span<const double> comparator_mean) {
    if (comparator_mean.size() != run.steps.size())
      throw std::invalid_argument("RegretTrace: comparator length differs from run length");
    rows_.reserve(run.steps.size());
    double comp = 0.0, observed = 0.0, mean = 0.0;
    for (std::size_t i = 0; i < run.steps.size(); ++i) {
      const StepRecord& s = run.steps[i];
      comp += comparator_mean[i];
      observed += s.reward_observed;
      mean += s.reward_mean;
      RegretRow row;
      row.t = i + 1;
      row.action = s.action;
      row.reward_observed = s.reward_observed;
      row.reward_mean = s.reward_mean;
      row.comparator_mean = comparator_mean[i];
      row.cum_regret_noisy = comp - observed;
      row.cum_regret_mean = comp - mean;
      row.avg_regret_mean = row.cum_regret_mean / static_cast<double>(row.t);
      row.episode = s.episode;
      rows_.push_back(row);
      comparator_cum_.push_back(comp);
      observed_cum_.push_back(observed);
      mean_cum_.push_back(mean);
    }
  }

  std::size_t horizon() const { return rows_.size(); }
  const RegretRow& at(std::size_t t) const { return rows_.at(t - 1); }
  std::span<const RegretRow> rows() const { return rows_; }

  double comparator_cumulative(std::size_t t) const { return comparator_cum_.at(t - 1); }
  double observed_cumulative(std::size_t t) const { return observed_cum_.at(t - 1); }
  double mean_cumulative(std::size_t t) const { return mean_cum_.at(t - 1); }

  double average_mean_regret(std::size_t t) const { return at(t).avg_regret_mean; }

 private:
  std::vector<RegretRow> rows_;
  std::vector<double> comparator_cum_, observed_cum_, mean_cum_;
};

}  // namespace congested
