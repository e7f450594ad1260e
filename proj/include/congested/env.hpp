#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "congested/rng.hpp"

namespace congested {

/// Zero-based arm (or path) identifier.
using ArmId = std::size_t;

/// The last `window` actions, oldest first. Symbols are arm ids for the
/// multi-armed setting and path indices for routing.
class History {
 public:
  History(std::size_t n_symbols, std::vector<ArmId> window)
      : n_symbols_(n_symbols), window_(std::move(window)) {
    if (n_symbols_ == 0) throw std::invalid_argument("History: need at least one symbol");
    if (window_.empty()) throw std::invalid_argument("History: window must be non-empty");
    for (ArmId a : window_) check(a);
  }

  /// Window filled with `window` copies of `fill`.
  static History filled(std::size_t n_symbols, std::size_t window, ArmId fill = 0) {
    return History(n_symbols, std::vector<ArmId>(window, fill));
  }

  std::size_t n_symbols() const { return n_symbols_; }
  std::size_t size() const { return window_.size(); }
  std::span<const ArmId> window() const { return window_; }
  ArmId operator[](std::size_t i) const { return window_[i]; }

  std::size_t count(ArmId a) const {
    check(a);
    return static_cast<std::size_t>(std::count(window_.begin(), window_.end(), a));
  }

  History advanced(ArmId a) const {
    check(a);
    History next = *this;
    std::shift_left(next.window_.begin(), next.window_.end(), 1);
    next.window_.back() = a;
    return next;
  }

  /// In-place shift-append; the hot path in simulation loops.
  void advance(ArmId a) {
    check(a);
    std::shift_left(window_.begin(), window_.end(), 1);
    window_.back() = a;
  }

  bool operator==(const History&) const = default;

 private:
  void check(ArmId a) const {
    if (a >= n_symbols_)
      throw std::domain_error("action id " + std::to_string(a) + " out of range [0, " +
                              std::to_string(n_symbols_) + ")");
  }

  std::size_t n_symbols_;
  std::vector<ArmId> window_;
};

inline std::size_t count_in_history(const History& h, ArmId a) { return h.count(a); }

inline History advance_history(const History& h, ArmId a) { return h.advanced(a); }

/// Congestion multipliers c[a][j] for j = 0..window, each in (0, 1] and
/// non-increasing in j.
class CongestionTable {
 public:
  CongestionTable(std::size_t n_arms, std::size_t window, std::vector<double> values)
      : n_arms_(n_arms), window_(window), values_(std::move(values)) {
    if (n_arms_ == 0 || window_ == 0)
      throw std::invalid_argument("CongestionTable: arms and window must be positive");
    if (values_.size() != n_arms_ * (window_ + 1))
      throw std::invalid_argument("CongestionTable: expected " +
                                  std::to_string(n_arms_ * (window_ + 1)) + " values");
    for (std::size_t a = 0; a < n_arms_; ++a) {
      for (std::size_t j = 0; j <= window_; ++j) {
        const double c = (*this)(a, j);
        if (!(c > 0.0 && c <= 1.0))
          throw std::invalid_argument("CongestionTable: value outside (0, 1] at arm " +
                                      std::to_string(a) + ", count " + std::to_string(j));
        if (j > 0 && c > (*this)(a, j - 1))
          throw std::invalid_argument("CongestionTable: row " + std::to_string(a) +
                                      " increases at count " + std::to_string(j));
      }
    }
  }

  /// Builds from per-arm rows of length window + 1.
  static CongestionTable from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty() || rows.front().size() < 2)
      throw std::invalid_argument("CongestionTable: rows need window + 1 >= 2 entries");
    std::vector<double> flat;
    for (const auto& row : rows) {
      if (row.size() != rows.front().size())
        throw std::invalid_argument("CongestionTable: ragged rows");
      flat.insert(flat.end(), row.begin(), row.end());
    }
    return CongestionTable(rows.size(), rows.front().size() - 1, std::move(flat));
  }

  std::size_t n_arms() const { return n_arms_; }
  std::size_t window() const { return window_; }

  double operator()(ArmId a, std::size_t j) const {
    if (a >= n_arms_ || j > window_) throw std::domain_error("CongestionTable: index out of range");
    return values_[a * (window_ + 1) + j];
  }

  std::span<const double> row(ArmId a) const {
    return std::span<const double>(values_).subspan(a * (window_ + 1), window_ + 1);
  }

  /// c_min = min over (a, j).
  double min_value() const { return *std::min_element(values_.begin(), values_.end()); }

 private:
  std::size_t n_arms_;
  std::size_t window_;
  std::vector<double> values_;
};

/// c[a][j] = 1 / max(1, j). The zero-count entry is 1 (no congestion).
inline CongestionTable reciprocal_congestion(std::size_t n_arms, std::size_t window) {
  if (n_arms == 0 || window == 0)
    throw std::invalid_argument("reciprocal_congestion: arms and window must be positive");
  std::vector<double> values;
  values.reserve(n_arms * (window + 1));
  for (std::size_t a = 0; a < n_arms; ++a)
    for (std::size_t j = 0; j <= window; ++j)
      values.push_back(1.0 / static_cast<double>(std::max<std::size_t>(1, j)));
  return CongestionTable(n_arms, window, std::move(values));
}

/// c[a][j] = 1 / (1 + j): the reciprocal of the count including the
/// current play, so a single repeat already halves the reward.
inline CongestionTable reciprocal_inclusive_congestion(std::size_t n_arms, std::size_t window) {
  if (n_arms == 0 || window == 0)
    throw std::invalid_argument("reciprocal_inclusive_congestion: arms and window must be positive");
  std::vector<double> values;
  values.reserve(n_arms * (window + 1));
  for (std::size_t a = 0; a < n_arms; ++a)
    for (std::size_t j = 0; j <= window; ++j) values.push_back(1.0 / static_cast<double>(1 + j));
  return CongestionTable(n_arms, window, std::move(values));
}

/// No congestion at all: c ≡ 1.
inline CongestionTable flat_congestion(std::size_t n_arms, std::size_t window) {
  return CongestionTable(n_arms, window, std::vector<double>(n_arms * (window + 1), 1.0));
}

/// A congested multi-armed bandit: K arms with means mu, a window, a
/// congestion table, Gaussian reward noise, and a starting history.
struct MabInstance {
  std::size_t n_arms;
  std::size_t window;
  std::vector<double> mu;
  CongestionTable congestion;
  double noise_sigma = 1.0;
  /// Empty means `window` copies of arm 0.
  std::vector<ArmId> initial_window{};

  MabInstance(std::vector<double> means, CongestionTable table, double sigma = 1.0,
              std::vector<ArmId> start = {})
      : n_arms(means.size()),
        window(table.window()),
        mu(std::move(means)),
        congestion(std::move(table)),
        noise_sigma(sigma),
        initial_window(std::move(start)) {
    if (n_arms == 0) throw std::invalid_argument("MabInstance: need at least one arm");
    if (congestion.n_arms() != n_arms)
      throw std::invalid_argument("MabInstance: congestion table arm count mismatch");
    for (double m : mu)
      if (!(m >= 0.0 && m <= 1.0)) throw std::invalid_argument("MabInstance: mean outside [0, 1]");
    if (!(noise_sigma >= 0.0)) throw std::invalid_argument("MabInstance: negative noise sigma");
    if (!initial_window.empty()) (void)initial_history();
  }

  History initial_history() const {
    if (initial_window.empty()) return History::filled(n_arms, window, 0);
    if (initial_window.size() != window)
      throw std::invalid_argument("MabInstance: initial history length differs from window");
    return History(n_arms, initial_window);
  }

  /// r(a, j) = c[a][j] * mu_a.
  double pair_reward(ArmId a, std::size_t j) const { return congestion(a, j) * mu.at(a); }

  /// Full (a, j) table, row-major with window + 1 columns.
  std::vector<double> reward_table() const {
    std::vector<double> table;
    table.reserve(n_arms * (window + 1));
    for (ArmId a = 0; a < n_arms; ++a)
      for (std::size_t j = 0; j <= window; ++j) table.push_back(pair_reward(a, j));
    return table;
  }
};

inline double mean_reward(const MabInstance& inst, const History& h, ArmId a) {
  return inst.pair_reward(a, h.count(a));
}

inline double sample_reward(const MabInstance& inst, const History& h, ArmId a, Rng& rng) {
  // Always consume a draw so the noise stream does not depend on sigma.
  const double eps = rng.normal();
  const double mean = mean_reward(inst, h, a);
  if (inst.noise_sigma == 0.0) return mean;
  return mean + inst.noise_sigma * eps;
}

}  // namespace congested
