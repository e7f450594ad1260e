#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "congested/baselines.hpp"
#include "congested/carcb.hpp"
#include "congested/carmab.hpp"
#include "congested/check.hpp"
#include "congested/errors.hpp"
#include "congested/harness/config.hpp"
#include "congested/mdp.hpp"
#include "congested/routing.hpp"
#include "congested/trace.hpp"

namespace congested::harness {

inline constexpr std::string_view kVersion = "0.1.0";

inline constexpr std::string_view kTraceHeader =
    "t,action,reward_observed,reward_mean,comparator_mean,cum_regret_noisy,cum_regret_mean,avg_regret_mean,episode";
inline constexpr std::string_view kAggregateHeader = "t,mean_avg_regret,std_avg_regret,n_reps";

/// Shortest round-trip decimal form.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// Per-round mean rewards of the comparator plus its certificates.
struct ComparatorTrace {
  std::vector<double> rewards;
  /// Gain of the optimal stationary policy; NaN when not applicable.
  double gain = std::numeric_limits<double>::quiet_NaN();
  double policy_total = 0.0;
  /// Finite-horizon optimum from the start state when under the cap.
  std::optional<double> dp_value;
  /// window * r_max: bound on dp_value - policy_total.
  double gap_bound = 0.0;
};

/// Karp-optimal stationary policy completed to every state, simulated from
/// `start`; the finite-horizon DP value is attached when tractable.
inline ComparatorTrace comparator_from_mdp(const DeterministicMdp& mdp, std::size_t start, std::size_t horizon,
                                           std::size_t window, const PlannerLimits& limits = {}) {
  ComparatorTrace out;
  const CyclePlan plan = karp_max_mean_cycle(mdp, limits);
  const Policy policy = policy_from_cycle(mdp, plan);
  out.gain = plan.rho;
  out.rewards = simulate_policy_rewards(mdp, policy, start, horizon);
  for (double r : out.rewards) out.policy_total += r;
  out.gap_bound = static_cast<double>(window) * mdp.max_reward();
  try {
    out.dp_value = finite_horizon_dp(mdp, horizon, start, limits).value;
  } catch (const capacity_error&) {
    out.dp_value.reset();
  }
  return out;
}

inline ComparatorTrace comparator_trace(const MabInstance& inst, std::size_t horizon, const PlannerLimits& limits = {}) {
  const std::vector<double> table = inst.reward_table();
  const DeterministicMdp mdp = build_mdp(inst.n_arms, inst.window, table, limits);
  return comparator_from_mdp(mdp, mdp.codec->encode(inst.initial_history()), horizon, inst.window, limits);
}

inline ComparatorTrace comparator_trace(const RoutingInstance& inst, std::size_t horizon,
                                        const PlannerLimits& limits = {}) {
  const std::vector<double> table = inst.edge_reward_table();
  const DeterministicMdp mdp = build_st_mdp(inst, table, limits);
  return comparator_from_mdp(mdp, mdp.codec->encode(inst.initial_history()), horizon, inst.window(), limits);
}

/// One learner (or baseline) on one window value within a replication.
struct CurveRun {
  std::string label;
  std::size_t window = 0;
  std::vector<RegretRow> rows;  // logged time points only
  double final_avg_regret_mean = 0.0;
  std::size_t episodes = 0;
  ComparatorTrace comparator;   // rewards cleared after use
};

struct ReplicationResult {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  std::vector<CurveRun> curves;
};

namespace detail {

inline std::string algorithm_label(Mode m) {
  switch (m) {
    case Mode::mab: return "carmab";
    case Mode::st: return "carmab_st";
    default: return "carcb";
  }
}

inline CurveRun make_curve(std::string label, std::size_t window, const RunTrace& run, ComparatorTrace comp,
                           const std::vector<std::size_t>& points) {
  const RegretTrace regret(run, comp.rewards);
  CurveRun curve;
  curve.label = std::move(label) + "_w" + std::to_string(window);
  curve.window = window;
  curve.rows.reserve(points.size());
  for (std::size_t t : points) curve.rows.push_back(regret.at(t));
  curve.final_avg_regret_mean = regret.average_mean_regret(regret.horizon());
  curve.episodes = run.episodes.size();
  comp.rewards.clear();
  comp.rewards.shrink_to_fit();
  curve.comparator = std::move(comp);
  return curve;
}

inline std::vector<double> draw_means(const ExperimentConfig& cfg, Rng& rng) {
  if (cfg.mu) return *cfg.mu;
  std::vector<double> mu(cfg.arms);
  for (double& m : mu) m = rng.uniform();
  return mu;
}

inline Vector draw_theta(const ExperimentConfig& cfg, Rng& rng) {
  if (cfg.theta_star)
    return Eigen::Map<const Vector>(cfg.theta_star->data(), static_cast<Eigen::Index>(cfg.dim));
  return ContextSequence::unit_positive_vector(cfg.dim, rng);
}

inline RoutingInstance make_routing(const ExperimentConfig& cfg, std::size_t window) {
  std::optional<CongestionTable> table;
  if (cfg.congestion.kind != "reciprocal") table = cfg.congestion.build(cfg.graph->edges.size(), window);
  return RoutingInstance(*cfg.graph, window, std::move(table), cfg.noise_sigma, cfg.initial_history);
}

inline CarmabConfig carmab_config(const ExperimentConfig& cfg) {
  CarmabConfig mc;
  mc.delta = cfg.delta;
  mc.width_constant = cfg.width_constant;
  mc.horizon = cfg.horizon;
  mc.max_episodes = cfg.max_episodes;
  mc.limits = cfg.limits;
  return mc;
}

inline CarcbConfig carcb_config(const ExperimentConfig& cfg) {
  CarcbConfig cc;
  cc.horizon = cfg.horizon;
  cc.noise_sigma = cfg.noise_sigma;
  cc.ridge = cfg.ridge;
  cc.clip_features = cfg.clip_features;
  cc.initial_window = cfg.initial_history;
  cc.limits = cfg.limits;
  return cc;
}

}  // namespace detail

/// Runs replication r (seed = base_seed + r) of a learning mode. Streams
/// per window index w: 1000 + w for the instance draw, 2000 + w for the
/// learner, 3000 + 100 b + w for baseline b.
inline ReplicationResult run_replication(const ExperimentConfig& cfg, std::size_t r) {
  ReplicationResult out;
  out.index = r;
  out.seed = cfg.base_seed + r;
  const std::vector<std::size_t> points = logged_time_points(cfg.horizon, cfg.thin);
  const std::string algo = detail::algorithm_label(cfg.mode);

  for (std::size_t wi = 0; wi < cfg.windows.size(); ++wi) {
    const std::size_t w = cfg.windows[wi];
    Rng instance_rng = Rng::derive(out.seed, 1000 + wi);
    Rng learner_rng = Rng::derive(out.seed, 2000 + wi);
    switch (cfg.mode) {
      case Mode::mab: {
        const MabInstance inst(detail::draw_means(cfg, instance_rng), cfg.congestion.build(cfg.arms, w),
                               cfg.noise_sigma, cfg.initial_history);
        ComparatorTrace comp = comparator_trace(inst, cfg.horizon, cfg.limits);
        const RunTrace run = run_carmab(inst, detail::carmab_config(cfg), learner_rng);
        out.curves.push_back(detail::make_curve(algo, w, run, comp, points));
        for (std::size_t b = 0; b < cfg.baselines.size(); ++b) {
          Rng rng = Rng::derive(out.seed, 3000 + 100 * b + wi);
          const std::string& name = cfg.baselines[b];
          const RunTrace base = name == "ucb1"     ? baseline_ucb1(inst, cfg.horizon, rng)
                                : name == "random" ? baseline_random(inst, cfg.horizon, rng)
                                                   : baseline_greedy(inst, cfg.horizon, rng);
          out.curves.push_back(detail::make_curve(name, w, base, comp, points));
        }
        break;
      }
      case Mode::st: {
        const RoutingInstance inst = detail::make_routing(cfg, w);
        ComparatorTrace comp = comparator_trace(inst, cfg.horizon, cfg.limits);
        const RoutingRun run = run_carmab_st(inst, detail::carmab_config(cfg), learner_rng);
        out.curves.push_back(detail::make_curve(algo, w, run.trace, std::move(comp), points));
        break;
      }
      case Mode::cb_known:
      case Mode::cb_stochastic: {
        const CongestionTable congestion = cfg.congestion.build(cfg.arms, w);
        const Vector theta = detail::draw_theta(cfg, instance_rng);
        const CarcbConfig cc = detail::carcb_config(cfg);
        const History start = cc.initial_history(cfg.arms, w);
        CarcbRun run;
        std::optional<ContextSequence> ctx;
        if (cfg.mode == Mode::cb_known) {
          if (cfg.contexts.source == ContextSpec::Source::fixed_sequence)
            ctx.emplace(cfg.contexts.rounds, cfg.arms, cfg.dim, cfg.contexts.features);
          else
            ctx = ContextSequence::uniform_normalized(cfg.horizon, cfg.arms, cfg.dim, instance_rng);
          run = run_carcb_known(theta, *ctx, congestion, cc, learner_rng);
        } else {
          const ContextDistribution dist(cfg.contexts.means, cfg.contexts.covariances);
          run = run_carcb_stochastic(theta, dist, congestion, cc, learner_rng);
          ctx = std::move(run.contexts);
        }
        ComparatorTrace comp;
        comp.rewards = hindsight_comparator(theta, *ctx, cfg.horizon, congestion, start, cfg.limits);
        for (double x : comp.rewards) comp.policy_total += x;
        comp.dp_value = comp.policy_total;
        out.curves.push_back(detail::make_curve(algo, w, run.trace, std::move(comp), points));
        break;
      }
      default:
        throw config_error("run_replication: mode has no learner");
    }
  }
  return out;
}

/// All replications, up to `jobs` at a time. Results are ordered by
/// replication index; the first failure (by index) is rethrown.
inline std::vector<ReplicationResult> run_replications(const ExperimentConfig& cfg, std::size_t jobs) {
  const std::size_t n = cfg.replications;
  std::vector<ReplicationResult> results(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t r = next++; r < n; r = next++) {
      try {
        results[r] = run_replication(cfg, r);
      } catch (...) {
        errors[r] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(jobs, 1, n);
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

struct AggregateRow {
  std::size_t t = 0;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for one replication
  std::size_t n = 0;
};

/// Mean and spread of avg_regret_mean across replications for curve c.
inline std::vector<AggregateRow> aggregate_curve(const std::vector<ReplicationResult>& reps, std::size_t c) {
  std::vector<AggregateRow> out;
  if (reps.empty()) return out;
  const std::size_t rows = reps.front().curves.at(c).rows.size();
  for (std::size_t i = 0; i < rows; ++i) {
    AggregateRow row;
    row.t = reps.front().curves[c].rows[i].t;
    row.n = reps.size();
    for (const auto& rep : reps) row.mean += rep.curves[c].rows[i].avg_regret_mean;
    row.mean /= static_cast<double>(row.n);
    if (row.n > 1) {
      double ss = 0.0;
      for (const auto& rep : reps) {
        const double d = rep.curves[c].rows[i].avg_regret_mean - row.mean;
        ss += d * d;
      }
      row.std = std::sqrt(ss / static_cast<double>(row.n - 1));
    }
    out.push_back(row);
  }
  return out;
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot write '" + path.string() + "'");
  return out;
}

inline void close_out(std::ofstream& out, const std::filesystem::path& path) {
  out.close();
  if (!out) throw io_error("write failed for '" + path.string() + "'");
}

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw io_error("cannot create directory '" + dir.string() + "': " + ec.message());
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, 16);
  std::string s(buf, res.ptr);
  return std::string(16 - s.size(), '0') + s;
}

inline json metadata_base(const ExperimentConfig& cfg) {
  json meta;
  meta["config_hash"] = hex64(cfg.hash);
  meta["rng"] = std::string(Rng::algorithm_id);
  meta["version"] = std::string(kVersion);
  meta["mode"] = std::string(mode_name(cfg.mode));
  return meta;
}

}  // namespace detail

inline void write_trace_csv(const std::filesystem::path& path, const std::vector<RegretRow>& rows) {
  std::ofstream out = detail::open_out(path);
  out << kTraceHeader << '\n';
  for (const RegretRow& r : rows)
    out << r.t << ',' << r.action << ',' << format_double(r.reward_observed) << ',' << format_double(r.reward_mean)
        << ',' << format_double(r.comparator_mean) << ',' << format_double(r.cum_regret_noisy) << ','
        << format_double(r.cum_regret_mean) << ',' << format_double(r.avg_regret_mean) << ',' << r.episode << '\n';
  detail::close_out(out, path);
}

inline void write_aggregate_csv(const std::filesystem::path& path, const std::vector<AggregateRow>& rows) {
  std::ofstream out = detail::open_out(path);
  out << kAggregateHeader << '\n';
  for (const AggregateRow& r : rows)
    out << r.t << ',' << format_double(r.mean) << ',' << format_double(r.std) << ',' << r.n << '\n';
  detail::close_out(out, path);
}

inline void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out = detail::open_out(path);
  out << j.dump(2) << '\n';
  detail::close_out(out, path);
}

/// Writes <label>_rep<r>.csv per replication and curve, <label>_aggregate.csv
/// per curve, and metadata.json.
inline void write_outputs(const ExperimentConfig& cfg, const std::vector<ReplicationResult>& reps,
                          const std::filesystem::path& dir) {
  detail::ensure_dir(dir);
  json meta = detail::metadata_base(cfg);
  meta["horizon"] = cfg.horizon;
  meta["replications"] = cfg.replications;
  meta["base_seed"] = cfg.base_seed;
  meta["thin"] = cfg.thin;
  meta["curves"] = json::array();
  meta["runs"] = json::array();
  if (reps.empty()) return;
  for (std::size_t c = 0; c < reps.front().curves.size(); ++c) {
    const std::string& label = reps.front().curves[c].label;
    meta["curves"].push_back({{"label", label}, {"window", reps.front().curves[c].window}});
    for (const auto& rep : reps)
      write_trace_csv(dir / (label + "_rep" + std::to_string(rep.index) + ".csv"), rep.curves[c].rows);
    write_aggregate_csv(dir / (label + "_aggregate.csv"), aggregate_curve(reps, c));
  }
  for (const auto& rep : reps)
    for (const auto& curve : rep.curves) {
      json run{{"replication", rep.index},
               {"seed", rep.seed},
               {"label", curve.label},
               {"episodes", curve.episodes},
               {"final_avg_regret_mean", curve.final_avg_regret_mean},
               {"comparator_total", curve.comparator.policy_total}};
      if (!std::isnan(curve.comparator.gain)) {
        run["comparator_gain"] = curve.comparator.gain;
        run["comparator_gap_bound"] = curve.comparator.gap_bound;
      }
      run["comparator_dp_value"] = curve.comparator.dp_value ? json(*curve.comparator.dp_value) : json(nullptr);
      meta["runs"].push_back(std::move(run));
    }
  write_json(dir / "metadata.json", meta);
}

/// Exact planning summary of the configured MAB instance per window: gain,
/// optimal cycle, diameter and finite-horizon optimum.
inline json oracle_report(const ExperimentConfig& cfg) {
  json report = json::array();
  for (std::size_t wi = 0; wi < cfg.windows.size(); ++wi) {
    const std::size_t w = cfg.windows[wi];
    Rng instance_rng = Rng::derive(cfg.base_seed, 1000 + wi);
    const MabInstance inst(detail::draw_means(cfg, instance_rng), cfg.congestion.build(cfg.arms, w), cfg.noise_sigma,
                           cfg.initial_history);
    const std::vector<double> table = inst.reward_table();
    const DeterministicMdp mdp = build_mdp(inst.n_arms, w, table, cfg.limits);
    const CyclePlan plan = karp_max_mean_cycle(mdp, cfg.limits);
    const ComparatorTrace comp = comparator_trace(inst, cfg.horizon, cfg.limits);
    json cycle = json::array();
    for (std::size_t i = 0; i < plan.cycle_states.size(); ++i) {
      const History h = mdp.codec->decode(plan.cycle_states[i]);
      cycle.push_back({{"history", std::vector<ArmId>(h.window().begin(), h.window().end())},
                       {"action", plan.cycle_actions[i]}});
    }
    const std::optional<std::size_t> d = diameter(mdp);
    report.push_back({{"window", w},
                      {"mu", inst.mu},
                      {"states", mdp.n_states},
                      {"gain", plan.rho},
                      {"cycle", cycle},
                      {"diameter", d ? json(*d) : json(nullptr)},
                      {"horizon", cfg.horizon},
                      {"policy_total", comp.policy_total},
                      {"dp_value", comp.dp_value ? json(*comp.dp_value) : json(nullptr)},
                      {"gap_bound", comp.gap_bound}});
  }
  return report;
}

/// One JSON object per property, in suite order.
inline std::vector<json> check_report(const std::vector<PropertyResult>& results) {
  std::vector<json> lines;
  for (const PropertyResult& r : results)
    lines.push_back({{"property", r.name},
                     {"cases", r.cases},
                     {"failures", r.failures},
                     {"passed", r.passed()},
                     {"detail", r.detail}});
  return lines;
}

inline void write_check_report(const ExperimentConfig& cfg, const std::vector<json>& lines,
                               const std::filesystem::path& dir) {
  detail::ensure_dir(dir);
  const std::filesystem::path path = dir / "check.jsonl";
  std::ofstream out = detail::open_out(path);
  for (const json& line : lines) out << line.dump() << '\n';
  detail::close_out(out, path);
  json meta = detail::metadata_base(cfg);
  meta["check_seed"] = cfg.check.seed;
  write_json(dir / "metadata.json", meta);
}

}  // namespace congested::harness
