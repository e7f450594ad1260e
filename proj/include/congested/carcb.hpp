#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "congested/env.hpp"
#include "congested/errors.hpp"
#include "congested/mdp.hpp"
#include "congested/rng.hpp"
#include "congested/trace.hpp"

namespace congested {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Per-round, per-arm feature vectors phi(x_t, a), stored [t][a][d].
class ContextSequence {
 public:
  ContextSequence(std::size_t horizon, std::size_t n_arms, std::size_t dim)
      : horizon_(horizon), n_arms_(n_arms), dim_(dim), data_(horizon * n_arms * dim, 0.0) {}

  ContextSequence(std::size_t horizon, std::size_t n_arms, std::size_t dim, std::vector<double> data)
      : horizon_(horizon), n_arms_(n_arms), dim_(dim), data_(std::move(data)) {
    if (data_.size() != horizon_ * n_arms_ * dim_)
      throw std::invalid_argument("ContextSequence: data size must be T * K * d");
  }

  /// The same per-arm features at every round.
  static ContextSequence constant(std::size_t horizon, const std::vector<Vector>& per_arm) {
    const std::size_t dim = per_arm.at(0).size();
    ContextSequence ctx(horizon, per_arm.size(), dim);
    for (std::size_t t = 0; t < horizon; ++t)
      for (std::size_t a = 0; a < per_arm.size(); ++a) ctx.set(t, a, per_arm[a]);
    return ctx;
  }

  /// Entries uniform on (0, 1), each vector scaled to unit Euclidean norm.
  static ContextSequence uniform_normalized(std::size_t horizon, std::size_t n_arms, std::size_t dim, Rng& rng) {
    ContextSequence ctx(horizon, n_arms, dim);
    for (std::size_t t = 0; t < horizon; ++t)
      for (std::size_t a = 0; a < n_arms; ++a) ctx.set(t, a, unit_positive_vector(dim, rng));
    return ctx;
  }

  std::size_t horizon() const { return horizon_; }
  std::size_t n_arms() const { return n_arms_; }
  std::size_t dim() const { return dim_; }

  Eigen::Map<const Vector> feature(std::size_t t, ArmId a) const {
    return Eigen::Map<const Vector>(&data_[(t * n_arms_ + a) * dim_], static_cast<Eigen::Index>(dim_));
  }

  void set(std::size_t t, ArmId a, const Vector& x) {
    if (static_cast<std::size_t>(x.size()) != dim_) throw std::invalid_argument("ContextSequence: dimension mismatch");
    std::copy(x.data(), x.data() + dim_, data_.begin() + static_cast<std::ptrdiff_t>((t * n_arms_ + a) * dim_));
  }

  static Vector unit_positive_vector(std::size_t dim, Rng& rng) {
    Vector x(static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = rng.uniform_open();
    return x / x.norm();
  }

 private:
  std::size_t horizon_, n_arms_, dim_;
  std::vector<double> data_;
};

/// Uniform draw from the unit ball: a normalized Gaussian direction scaled
/// by U^(1/d).
inline Vector sample_unit_ball(std::size_t dim, Rng& rng) {
  Vector z(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  const double radius = std::pow(rng.uniform_open(), 1.0 / static_cast<double>(dim));
  return z / z.norm() * radius;
}

/// Accumulated least-squares statistics over congestion-scaled features.
class OlsState {
 public:
  explicit OlsState(std::size_t dim)
      : gram_(Matrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim))),
        moment_(Vector::Zero(static_cast<Eigen::Index>(dim))) {}

  void add(const Vector& scaled_feature, double reward) {
    gram_.noalias() += scaled_feature * scaled_feature.transpose();
    moment_.noalias() += reward * scaled_feature;
    ++count_;
  }

  std::size_t dim() const { return static_cast<std::size_t>(moment_.size()); }
  std::size_t count() const { return count_; }
  const Matrix& gram() const { return gram_; }
  const Vector& moment() const { return moment_; }

 private:
  Matrix gram_;
  Vector moment_;
  std::size_t count_ = 0;
};

struct OlsSolution {
  Vector theta;
  /// The system was singular and the minimum-norm solution was returned.
  bool degenerate = false;
};

/// Solves (gram + ridge I) theta = moment. With ridge 0 and a singular Gram
/// matrix, returns the minimum-norm least-squares solution instead.
inline OlsSolution ols_solve(const OlsState& state, double ridge = 1e-8) {
  if (state.count() == 0) throw std::invalid_argument("ols_solve: no samples");
  if (ridge < 0.0) throw std::invalid_argument("ols_solve: negative ridge");
  const auto dim = static_cast<Eigen::Index>(state.dim());
  const Matrix system = state.gram() + ridge * Matrix::Identity(dim, dim);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(system, Eigen::EigenvaluesOnly);
  const double largest = std::max(eig.eigenvalues().maxCoeff(), 0.0);
  const double smallest = eig.eigenvalues().minCoeff();
  OlsSolution out;
  if (largest == 0.0 || smallest <= largest * 1e-13) {
    out.degenerate = true;
    out.theta = system.completeOrthogonalDecomposition().solve(state.moment());
    return out;
  }
  out.theta = system.ldlt().solve(state.moment());
  return out;
}

/// Running (1/n) sum of phi phi^T for the features actually played.
class FeatureCovariance {
 public:
  explicit FeatureCovariance(std::size_t dim)
      : sum_(Matrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim))) {}

  void add(const Vector& feature) {
    sum_.noalias() += feature * feature.transpose();
    ++count_;
  }

  std::size_t count() const { return count_; }

  double min_eigenvalue() const {
    if (count_ == 0) throw std::invalid_argument("FeatureCovariance: no samples");
    const Matrix cov = sum_ / static_cast<double>(count_);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(cov, Eigen::EigenvaluesOnly);
    return eig.eigenvalues().minCoeff();
  }

 private:
  Matrix sum_;
  std::size_t count_ = 0;
};

/// Smallest eigenvalue of (1/n) sum phi phi^T over logged features.
inline double min_eigenvalue_diagnostic(std::span<const Vector> features) {
  if (features.empty()) throw std::invalid_argument("min_eigenvalue_diagnostic: empty log");
  FeatureCovariance cov(static_cast<std::size_t>(features.front().size()));
  for (const Vector& f : features) cov.add(f);
  return cov.min_eigenvalue();
}

/// Epoch e (1-based) lasts window * 2^e rounds.
struct EpochSchedule {
  std::size_t window = 1;

  std::size_t length(std::size_t epoch) const { return window << epoch; }

  /// 1-based start rounds of every epoch that begins within the horizon.
  std::vector<std::size_t> starts(std::size_t horizon) const {
    std::vector<std::size_t> out;
    std::size_t t = 1;
    for (std::size_t e = 1; t <= horizon; ++e) {
      out.push_back(t);
      t += length(e);
    }
    return out;
  }
};

/// Backward-induction value tables for a window of W rounds with per-round
/// arm scores: reward(t, s, a) = scores[t * K + a] * c(a, #(s, a)).
/// values[t * n + s] is the best total from round t in state s; row W is 0.
class WindowValues {
 public:
  WindowValues(std::span<const double> scores, std::size_t n_arms, const CongestionTable& congestion,
               const PlannerLimits& limits = {})
      : codec_(n_arms, congestion.window(), limits.max_states), n_arms_(n_arms) {
    if (congestion.n_arms() != n_arms) throw std::invalid_argument("WindowValues: congestion arm count mismatch");
    if (scores.size() % n_arms != 0) throw std::invalid_argument("WindowValues: scores must be W x K");
    rounds_ = scores.size() / n_arms;
    const std::size_t n = codec_.n_states();
    if (rounds_ + 1 > limits.max_table_cells / n)
      throw capacity_error("WindowValues: window x states exceeds cap");

    multiplier_.resize(n * n_arms);
    std::vector<ArmId> digits(codec_.window());
    std::vector<std::size_t> counts(n_arms);
    for (std::size_t s = 0; s < n; ++s) {
      codec_.decode_into(s, digits);
      std::fill(counts.begin(), counts.end(), 0);
      for (ArmId b : digits) ++counts[b];
      for (ArmId a = 0; a < n_arms; ++a) multiplier_[s * n_arms + a] = congestion(a, counts[a]);
    }

    values_.assign((rounds_ + 1) * n, 0.0);
    for (std::size_t t = rounds_; t-- > 0;) {
      const double* next_row = &values_[(t + 1) * n];
      double* row = &values_[t * n];
      for (std::size_t s = 0; s < n; ++s) {
        double best = -std::numeric_limits<double>::infinity();
        for (ArmId a = 0; a < n_arms; ++a) {
          const double cand = scores[t * n_arms + a] * multiplier_[s * n_arms + a] + next_row[codec_.successor(s, a)];
          best = std::max(best, cand);
        }
        row[s] = best;
      }
    }
  }

  const HistoryCodec& codec() const { return codec_; }
  std::size_t rounds() const { return rounds_; }
  double value(std::size_t t, std::size_t s) const { return values_[t * codec_.n_states() + s]; }
  double multiplier(std::size_t s, ArmId a) const { return multiplier_[s * n_arms_ + a]; }

  /// Lowest-index argmax of score * c + V(t + 1, next) for the given
  /// round-t scores (one per arm).
  ArmId best_action(std::size_t t, std::size_t s, std::span<const double> round_scores) const {
    double best = -std::numeric_limits<double>::infinity();
    ArmId choice = 0;
    for (ArmId a = 0; a < n_arms_; ++a) {
      const double cand = round_scores[a] * multiplier(s, a) + value(t + 1, codec_.successor(s, a));
      if (cand > best) {
        best = cand;
        choice = a;
      }
    }
    return choice;
  }

 private:
  HistoryCodec codec_;
  std::size_t n_arms_;
  std::size_t rounds_ = 0;
  std::vector<double> multiplier_;
  std::vector<double> values_;
};

struct WindowPlan {
  double value = 0.0;
  std::vector<ArmId> actions;
};

/// Optimal action sequence over a window with known per-round scores.
inline WindowPlan dp_plan_scores(std::span<const double> scores, std::size_t n_arms,
                                 const CongestionTable& congestion, const History& start,
                                 const PlannerLimits& limits = {}) {
  const WindowValues values(scores, n_arms, congestion, limits);
  WindowPlan plan;
  std::size_t s = values.codec().encode(start);
  plan.value = values.value(0, s);
  for (std::size_t t = 0; t < values.rounds(); ++t) {
    const ArmId a = values.best_action(t, s, scores.subspan(t * n_arms, n_arms));
    plan.actions.push_back(a);
    s = values.codec().successor(s, a);
  }
  return plan;
}

/// Per-round arm scores <theta, phi(x_t, a)> for rounds [first, first + rounds).
inline std::vector<double> linear_scores(const Vector& theta, const ContextSequence& ctx, std::size_t first,
                                         std::size_t rounds) {
  if (first + rounds > ctx.horizon()) throw std::out_of_range("linear_scores: window past context horizon");
  std::vector<double> scores;
  scores.reserve(rounds * ctx.n_arms());
  for (std::size_t t = first; t < first + rounds; ++t)
    for (ArmId a = 0; a < ctx.n_arms(); ++a) scores.push_back(theta.dot(ctx.feature(t, a)));
  return scores;
}

/// Known-context window planner: backward induction over (round, history)
/// with reward <theta, phi(x_t, a)> * f(a, #(h, a)). `first` is the 0-based
/// round of ctx where the window begins.
inline WindowPlan dp_plan_known(const Vector& theta, const ContextSequence& ctx, std::size_t first,
                                std::size_t rounds, const History& start, const CongestionTable& congestion,
                                const PlannerLimits& limits = {}) {
  if (rounds == 0) throw std::invalid_argument("dp_plan_known: window must be >= 1");
  const std::vector<double> scores = linear_scores(theta, ctx, first, rounds);
  return dp_plan_scores(scores, ctx.n_arms(), congestion, start, limits);
}

/// Gaussian per-arm feature distribution N(mean_a, cov_a).
class ContextDistribution {
 public:
  ContextDistribution(std::vector<Vector> means, std::vector<Matrix> covariances)
      : means_(std::move(means)), covariances_(std::move(covariances)) {
    if (means_.empty() || means_.size() != covariances_.size())
      throw std::invalid_argument("ContextDistribution: need one mean and covariance per arm");
    const auto d = means_.front().size();
    lower_ = std::numeric_limits<double>::infinity();
    upper_ = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < means_.size(); ++a) {
      if (means_[a].size() != d || covariances_[a].rows() != d || covariances_[a].cols() != d)
        throw std::invalid_argument("ContextDistribution: dimension mismatch");
      if (means_[a].norm() > 1.0 + 1e-12) throw std::invalid_argument("ContextDistribution: mean norm above 1");
      if (!covariances_[a].isApprox(covariances_[a].transpose()))
        throw std::invalid_argument("ContextDistribution: covariance not symmetric");
      Eigen::SelfAdjointEigenSolver<Matrix> eig(covariances_[a]);
      if (eig.eigenvalues().minCoeff() < -1e-12)
        throw std::invalid_argument("ContextDistribution: covariance not positive semidefinite");
      lower_ = std::min(lower_, eig.eigenvalues().minCoeff());
      upper_ = std::max(upper_, eig.eigenvalues().maxCoeff());
      const Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
      factors_.push_back(eig.eigenvectors() * root.asDiagonal());
    }
  }

  /// Isotropic covariance alpha * I for every arm.
  static ContextDistribution isotropic(std::vector<Vector> means, double alpha) {
    std::vector<Matrix> cov;
    for (const Vector& m : means) cov.push_back(alpha * Matrix::Identity(m.size(), m.size()));
    return ContextDistribution(std::move(means), std::move(cov));
  }

  std::size_t n_arms() const { return means_.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(means_.front().size()); }
  const Vector& mean(ArmId a) const { return means_.at(a); }
  const Matrix& covariance(ArmId a) const { return covariances_.at(a); }
  /// alpha_l and alpha_u: extreme covariance eigenvalues over arms.
  double alpha_lower() const { return lower_; }
  double alpha_upper() const { return upper_; }

  Vector sample(ArmId a, Rng& rng) const {
    Vector z(static_cast<Eigen::Index>(dim()));
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
    return means_[a] + factors_[a] * z;
  }

 private:
  std::vector<Vector> means_;
  std::vector<Matrix> covariances_;
  std::vector<Matrix> factors_;
  double lower_ = 0.0, upper_ = 0.0;
};

struct CarcbConfig {
  std::size_t horizon = 1000;
  double noise_sigma = 1.0;
  /// Added to the Gram diagonal; 0 gives plain least squares.
  double ridge = 1e-8;
  /// Overrides the uniform-ball draw of the first estimate.
  std::optional<Vector> initial_theta;
  /// Rescale sampled features with norm above 1 onto the unit sphere.
  bool clip_features = true;
  /// Empty means window copies of arm 0.
  std::vector<ArmId> initial_window;
  PlannerLimits limits{};

  void validate() const {
    if (horizon == 0) throw std::invalid_argument("CarcbConfig: horizon must be >= 1");
    if (!(noise_sigma >= 0.0)) throw std::invalid_argument("CarcbConfig: negative noise sigma");
    if (ridge < 0.0) throw std::invalid_argument("CarcbConfig: negative ridge");
  }

  History initial_history(std::size_t n_arms, std::size_t window) const {
    if (initial_window.empty()) return History::filled(n_arms, window, 0);
    if (initial_window.size() != window) throw std::invalid_argument("CarcbConfig: initial history length");
    return History(n_arms, initial_window);
  }
};

struct EpochRecord {
  std::size_t start = 0;   // 1-based
  std::size_t length = 0;
  Vector theta;            // estimate used to plan this epoch
  double min_eigenvalue = std::numeric_limits<double>::quiet_NaN();  // over features played before start
  bool degenerate = false;
};

struct CarcbRun {
  RunTrace trace;
  std::vector<EpochRecord> epochs;
  /// Features seen by the learner at every round (sampled in stochastic mode).
  std::optional<ContextSequence> contexts;
};

namespace detail {

inline void check_model(const Vector& theta_star, std::size_t dim, const CongestionTable& congestion, std::size_t n_arms) {
  if (static_cast<std::size_t>(theta_star.size()) != dim) throw std::invalid_argument("carcb: theta dimension mismatch");
  if (theta_star.norm() > 1.0 + 1e-12) throw std::invalid_argument("carcb: ||theta*|| above 1");
  if (congestion.n_arms() != n_arms) throw std::invalid_argument("carcb: congestion arm count mismatch");
}

inline Vector first_estimate(const CarcbConfig& cfg, std::size_t dim, Rng& rng) {
  if (cfg.initial_theta) {
    if (static_cast<std::size_t>(cfg.initial_theta->size()) != dim)
      throw std::invalid_argument("carcb: initial theta dimension mismatch");
    return *cfg.initial_theta;
  }
  return sample_unit_ball(dim, rng);
}

}  // namespace detail

/// Linear contextual learner with contexts known in advance.
///
/// Epoch e covers window * 2^e rounds (the last one truncated at the
/// horizon). Each epoch plans the whole window with the current estimate,
/// executes it, then refits theta on all data by least squares on
/// congestion-scaled features.
inline CarcbRun run_carcb_known(const Vector& theta_star, const ContextSequence& ctx,
                                const CongestionTable& congestion, const CarcbConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t K = ctx.n_arms();
  const std::size_t window = congestion.window();
  detail::check_model(theta_star, ctx.dim(), congestion, K);
  if (ctx.horizon() < cfg.horizon) throw std::invalid_argument("run_carcb_known: contexts shorter than horizon");

  Vector theta = detail::first_estimate(cfg, ctx.dim(), rng);
  History history = cfg.initial_history(K, window);
  OlsState ols(ctx.dim());
  FeatureCovariance played(ctx.dim());
  const EpochSchedule schedule{window};

  CarcbRun out;
  out.trace.steps.reserve(cfg.horizon);
  std::size_t t = 1;
  bool degenerate = false;
  for (std::size_t e = 1; t <= cfg.horizon; ++e) {
    const std::size_t rounds = std::min(schedule.length(e), cfg.horizon - t + 1);
    const WindowPlan plan = dp_plan_known(theta, ctx, t - 1, rounds, history, congestion, cfg.limits);
    EpochRecord epoch{t, rounds, theta, played.count() ? played.min_eigenvalue() : std::numeric_limits<double>::quiet_NaN(), degenerate};
    out.trace.episodes.push_back({t, rounds, plan.value, true});
    for (const ArmId a : plan.actions) {
      const auto x = ctx.feature(t - 1, a);
      const double c = congestion(a, history.count(a));
      const double mean = theta_star.dot(x) * c;
      const double observed = mean + cfg.noise_sigma * rng.normal();
      out.trace.steps.push_back({a, observed, mean, e - 1});
      ols.add(x * c, observed);
      played.add(x);
      history.advance(a);
      ++t;
    }
    out.epochs.push_back(std::move(epoch));
    const OlsSolution fit = ols_solve(ols, cfg.ridge);
    theta = fit.theta;
    degenerate = fit.degenerate;
  }
  return out;
}

/// Linear contextual learner with i.i.d. Gaussian contexts from a known
/// distribution, planned by certainty equivalence: value tables from the
/// mean-context rewards <theta, mean_a> * c(a, j), then at each round a
/// one-step lookahead on the sampled contexts. Epochs and refits as in the
/// known-context learner.
inline CarcbRun run_carcb_stochastic(const Vector& theta_star, const ContextDistribution& dist,
                                     const CongestionTable& congestion, const CarcbConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t K = dist.n_arms();
  const std::size_t d = dist.dim();
  const std::size_t window = congestion.window();
  detail::check_model(theta_star, d, congestion, K);

  Vector theta = detail::first_estimate(cfg, d, rng);
  History history = cfg.initial_history(K, window);
  OlsState ols(d);
  FeatureCovariance played(d);
  const EpochSchedule schedule{window};
  ContextSequence seen(cfg.horizon, K, d);

  CarcbRun out;
  out.trace.steps.reserve(cfg.horizon);
  std::vector<double> round_scores(K);
  std::vector<Vector> features(K);
  std::size_t t = 1;
  bool degenerate = false;
  for (std::size_t e = 1; t <= cfg.horizon; ++e) {
    const std::size_t rounds = std::min(schedule.length(e), cfg.horizon - t + 1);
    std::vector<double> mean_scores;
    mean_scores.reserve(rounds * K);
    for (std::size_t r = 0; r < rounds; ++r)
      for (ArmId a = 0; a < K; ++a) mean_scores.push_back(theta.dot(dist.mean(a)));
    const WindowValues values(mean_scores, K, congestion, cfg.limits);
    std::size_t state = values.codec().encode(history);

    EpochRecord epoch{t, rounds, theta, played.count() ? played.min_eigenvalue() : std::numeric_limits<double>::quiet_NaN(), degenerate};
    out.trace.episodes.push_back({t, rounds, values.value(0, state), true});
    for (std::size_t r = 0; r < rounds; ++r) {
      for (ArmId a = 0; a < K; ++a) {
        features[a] = dist.sample(a, rng);
        if (cfg.clip_features) {
          const double norm = features[a].norm();
          if (norm > 1.0) features[a] /= norm;
        }
        seen.set(t - 1, a, features[a]);
        round_scores[a] = theta.dot(features[a]);
      }
      const ArmId a = values.best_action(r, state, round_scores);
      const double c = congestion(a, history.count(a));
      const double mean = theta_star.dot(features[a]) * c;
      const double observed = mean + cfg.noise_sigma * rng.normal();
      out.trace.steps.push_back({a, observed, mean, e - 1});
      ols.add(features[a] * c, observed);
      played.add(features[a]);
      history.advance(a);
      state = values.codec().successor(state, a);
      ++t;
    }
    out.epochs.push_back(std::move(epoch));
    const OlsSolution fit = ols_solve(ols, cfg.ridge);
    theta = fit.theta;
    degenerate = fit.degenerate;
  }
  out.contexts = std::move(seen);
  return out;
}

/// Per-round mean rewards of the best action sequence in hindsight under
/// the true parameter. Contexts differ across rounds, so a policy on
/// (history, context) can realize any sequence and this is the exact
/// supremum over that class.
inline std::vector<double> hindsight_comparator(const Vector& theta_star, const ContextSequence& ctx,
                                                std::size_t horizon, const CongestionTable& congestion,
                                                const History& start, const PlannerLimits& limits = {}) {
  const WindowPlan plan = dp_plan_known(theta_star, ctx, 0, horizon, start, congestion, limits);
  std::vector<double> rewards;
  rewards.reserve(horizon);
  History h = start;
  for (std::size_t t = 0; t < horizon; ++t) {
    const ArmId a = plan.actions[t];
    rewards.push_back(theta_star.dot(ctx.feature(t, a)) * congestion(a, h.count(a)));
    h.advance(a);
  }
  return rewards;
}

}  // namespace congested
