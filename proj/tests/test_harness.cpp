#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "congested/baselines.hpp"
#include "congested/check.hpp"
#include "congested/harness/config.hpp"
#include "congested/harness/experiment.hpp"

using namespace congested;
using namespace congested::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("congested_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

MabInstance two_arm(double sigma, std::vector<ArmId> start = {}) {
  return MabInstance({1.0, 0.6}, reciprocal_inclusive_congestion(2, 1), sigma, std::move(start));
}

constexpr const char* kSmallMab = R"({
  "mode": "mab",
  "horizon": 1500,
  "instance": {"mu": [0.9, 0.5, 0.3], "window": [1, 2], "noise_sigma": 0.2},
  "algorithm": {"width_constant": 1.0},
  "baselines": ["ucb1", "random"],
  "replications": {"count": 3, "base_seed": 11}
})";

}  // namespace

TEST(Config, ParsesMabDefaultsAndOverrides) {
  const ExperimentConfig cfg = parse_config(kSmallMab);
  EXPECT_EQ(cfg.mode, Mode::mab);
  EXPECT_EQ(cfg.horizon, 1500u);
  EXPECT_EQ(cfg.arms, 3u);
  EXPECT_EQ(cfg.windows, (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(cfg.width_constant, 1.0);
  EXPECT_EQ(cfg.delta, 0.1);
  EXPECT_EQ(cfg.replications, 3u);
  EXPECT_EQ(cfg.base_seed, 11u);
  EXPECT_EQ(cfg.congestion.kind, "reciprocal");
  EXPECT_TRUE(cfg.thin);
}

TEST(Config, RejectsUnknownFieldsAndBadValues) {
  EXPECT_THROW(parse_config(R"({"mode": "mab", "instance": {"mu": [0.5], "windw": 2}})"), config_error);
  EXPECT_THROW(parse_config(R"({"mode": "mab", "horizon": 10, "extra": 1, "instance": {"mu": [0.5]}})"), config_error);
  EXPECT_THROW(parse_config(R"({"mode": "mab", "instance": {"mu": [1.5]}})"), config_error);
  EXPECT_THROW(parse_config(R"({"mode": "mab", "instance": {"mu": [0.5], "window": 0}})"), config_error);
  EXPECT_THROW(parse_config(R"({"mode": "mab", "horizon": -3, "instance": {"mu": [0.5]}})"), config_error);
  EXPECT_THROW(parse_config(R"({"mode": "bandit", "instance": {"mu": [0.5]}})"), config_error);
  EXPECT_THROW(parse_config(R"({"mode": "mab", "instance": {"mu": [0.5, 0.2]}, "algorithm": {"delta": 1.5}})"),
               config_error);
  EXPECT_THROW(parse_config(R"({"mode": "st", "instance": {"mu": [0.5]}})"), config_error);
  EXPECT_THROW(parse_config("{not json"), config_error);
  EXPECT_THROW(parse_config(R"({"mode": "mab", "instance": {"mu": [0.5, 0.5],
               "congestion": [[1.0, 0.4], [0.5, 0.6]], "window": 1}})"),
               config_error);
}

TEST(Config, ExplicitCongestionRows) {
  const ExperimentConfig cfg = parse_config(R"({"mode": "mab", "instance": {"mu": [1.0, 0.6], "window": 1,
      "congestion": [[1.0, 0.5], [1.0, 0.5]], "initial_history": [1]}})");
  const CongestionTable t = cfg.congestion.build(2, 1);
  EXPECT_EQ(t(1, 1), 0.5);
  EXPECT_EQ(cfg.initial_history, std::vector<ArmId>{1});
}

TEST(Config, RoutingGraphInlineAndCsv) {
  const ExperimentConfig inl = parse_config(R"({"mode": "st", "instance": {"window": 1, "graph": {
      "vertices": ["s", "u", "v", "t"], "source": "s", "sink": "t",
      "edges": [["s", "u", 0.9], ["u", "t", 0.8], ["s", "v", 0.6], ["v", "t", 0.5]]}}})");
  ASSERT_TRUE(inl.graph.has_value());
  EXPECT_EQ(inl.graph->edges.size(), 4u);
  EXPECT_EQ(inl.graph->sink, 3u);

  const fs::path dir = scratch_dir("edges");
  spit(dir / "edges.csv", "from,to,mu\ns,u,0.9\nu,t,0.8\ns,v,0.6\nv,t,0.5\n");
  spit(dir / "cfg.json", R"({"mode": "st", "instance": {"window": 1, "graph": {
      "vertices": ["s", "u", "v", "t"], "source": "s", "sink": "t", "edges_csv": "edges.csv"}}})");
  const ExperimentConfig csv = load_config(dir / "cfg.json");
  ASSERT_TRUE(csv.graph.has_value());
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(csv.graph->edges[i].from, inl.graph->edges[i].from);
    EXPECT_EQ(csv.graph->edges[i].mu, inl.graph->edges[i].mu);
  }
  EXPECT_THROW(parse_config(R"({"mode": "st", "instance": {"graph": {"vertices": ["s", "t"], "source": "s",
      "sink": "t", "edges": [["s", "x", 0.5]]}}})"),
               config_error);
  EXPECT_THROW(parse_config(R"({"mode": "st", "instance": {"graph": {"vertices": ["s", "m", "t"], "source": "s",
      "sink": "t", "edges": [["s", "m", 0.5]]}}})"),
               config_error);
}

TEST(Config, ContextSources) {
  const fs::path dir = scratch_dir("contexts");
  std::string csv = "t,arm,f1,f2\n";
  for (int t = 1; t <= 4; ++t)
    for (int a = 0; a < 2; ++a) csv += std::to_string(t) + "," + std::to_string(a) + ",0.5," + (a ? "0.1" : "0.2") + "\n";
  spit(dir / "ctx.csv", csv);
  spit(dir / "cfg.json", R"({"mode": "cb-known", "horizon": 4, "instance": {"arms": 2, "dim": 2, "window": 1,
      "theta_star": [0.6, 0.8], "contexts": {"source": "fixed_sequence", "csv": "ctx.csv"}}})");
  const ExperimentConfig cfg = load_config(dir / "cfg.json");
  EXPECT_EQ(cfg.contexts.rounds, 4u);
  EXPECT_EQ(cfg.contexts.features.size(), 16u);
  EXPECT_EQ(cfg.contexts.features[3], 0.1);

  spit(dir / "short.json", R"({"mode": "cb-known", "horizon": 5, "instance": {"arms": 2, "dim": 2,
      "contexts": {"source": "fixed_sequence", "csv": "ctx.csv"}}})");
  EXPECT_THROW(load_config(dir / "short.json"), config_error);

  const ExperimentConfig gauss = parse_config(R"({"mode": "cb-stochastic", "instance": {"arms": 2, "dim": 2,
      "contexts": {"source": "gaussian", "means": [[0.3, 0.3], [0.1, 0.5]], "alpha": 0.01}}})");
  EXPECT_EQ(gauss.contexts.covariances.size(), 2u);
  EXPECT_THROW(parse_config(R"({"mode": "cb-stochastic", "instance": {"arms": 2, "dim": 2,
      "contexts": {"source": "uniform_normalized"}}})"),
               config_error);
  EXPECT_THROW(parse_config(R"({"mode": "cb-known", "instance": {"arms": 2, "dim": 2, "theta_star": [1, 1],
      "contexts": {"source": "uniform_normalized"}}})"),
               config_error);
}

TEST(Config, HashTracksEveryByte) {
  const std::string text = kSmallMab;
  const std::uint64_t base = fnv1a(text);
  EXPECT_EQ(parse_config(text).hash, base);
  for (std::size_t i = 0; i < text.size(); i += 7) {
    std::string edited = text;
    edited[i] = static_cast<char>(edited[i] ^ 1);
    EXPECT_NE(fnv1a(edited), base) << i;
  }
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Comparator, TwoArmAlternationTotal) {
  const ComparatorTrace comp = comparator_trace(two_arm(0.1, {1}), 1000);
  EXPECT_NEAR(comp.gain, 0.8, 1e-12);
  EXPECT_NEAR(comp.policy_total, 800.0, 1e-9);
  ASSERT_TRUE(comp.dp_value.has_value());
  EXPECT_NEAR(*comp.dp_value, 800.0, 1e-9);
  EXPECT_EQ(comp.rewards.size(), 1000u);
}

TEST(Comparator, SingleArm) {
  const ComparatorTrace comp = comparator_trace(MabInstance({0.7}, reciprocal_congestion(1, 2)), 50);
  EXPECT_NEAR(comp.gain, 0.35, 1e-12);
  EXPECT_NEAR(comp.policy_total, 50 * 0.35, 1e-9);
}

TEST(Comparator, DpDominatesStationaryPolicy) {
  Rng rng(31);
  for (int i = 0; i < 100; ++i) {
    const MabInstance inst = random_instance(3, 3, rng);
    const std::size_t T = 1 + rng.below(300);
    const ComparatorTrace comp = comparator_trace(inst, T);
    ASSERT_TRUE(comp.dp_value.has_value());
    EXPECT_GE(*comp.dp_value, comp.policy_total - 1e-9);
    EXPECT_LE(comp.policy_total, T * comp.gain + comp.gap_bound + 1e-9);
  }
}

TEST(Regret, RowIdentities) {
  const MabInstance inst({0.9, 0.4}, reciprocal_congestion(2, 2), 0.5);
  CarmabConfig mc;
  mc.horizon = 700;
  Rng rng(4);
  const RunTrace run = run_carmab(inst, mc, rng);
  const ComparatorTrace comp = comparator_trace(inst, mc.horizon);
  const RegretTrace regret(run, comp.rewards);
  double comp_sum = 0, obs_sum = 0, mean_sum = 0;
  for (std::size_t t = 1; t <= mc.horizon; ++t) {
    comp_sum += comp.rewards[t - 1];
    obs_sum += run.steps[t - 1].reward_observed;
    mean_sum += run.steps[t - 1].reward_mean;
    const RegretRow& row = regret.at(t);
    EXPECT_EQ(row.t, t);
    EXPECT_NEAR(row.cum_regret_noisy, comp_sum - obs_sum, 1e-9);
    EXPECT_NEAR(row.cum_regret_mean, comp_sum - mean_sum, 1e-9);
    EXPECT_NEAR(row.avg_regret_mean, row.cum_regret_mean / t, 1e-12);
    EXPECT_EQ(row.comparator_mean, comp.rewards[t - 1]);
  }
  EXPECT_THROW(RegretTrace(run, std::vector<double>(3)), std::invalid_argument);
}

TEST(LoggedPoints, ThinningSchedule) {
  const auto all = logged_time_points(50, false);
  EXPECT_EQ(all.size(), 50u);
  const auto few = logged_time_points(300, true);
  EXPECT_EQ(few.size(), 300u);
  const auto thin = logged_time_points(100000, true);
  EXPECT_EQ(thin.back(), 100000u);
  EXPECT_TRUE(std::is_sorted(thin.begin(), thin.end()));
  EXPECT_EQ(std::adjacent_find(thin.begin(), thin.end()), thin.end());
  EXPECT_LT(thin.size(), 1200u);
  for (std::size_t i = 1000; i + 2 < thin.size(); ++i)
    EXPECT_LE(static_cast<double>(thin[i + 1]), 1.05 * thin[i] + 1.0);
}

TEST(Experiment, OutputsDeterministicAcrossJobs) {
  const ExperimentConfig cfg = parse_config(kSmallMab);
  const auto serial = run_replications(cfg, 1);
  const auto parallel = run_replications(cfg, 3);
  const fs::path a = scratch_dir("det_a"), b = scratch_dir("det_b");
  write_outputs(cfg, serial, a);
  write_outputs(cfg, parallel, b);
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    const fs::path other = b / entry.path().filename();
    ASSERT_TRUE(fs::exists(other)) << other;
    EXPECT_EQ(slurp(entry.path()), slurp(other)) << entry.path().filename();
    ++files;
  }
  // 3 curves x 2 windows, each with 3 replications + 1 aggregate, plus metadata.
  EXPECT_EQ(files, 6u * 4u + 1u);
}

TEST(Experiment, TraceAndAggregateShape) {
  ExperimentConfig cfg = parse_config(kSmallMab);
  cfg.horizon = 3000;
  const auto reps = run_replications(cfg, 2);
  ASSERT_EQ(reps.size(), 3u);
  ASSERT_EQ(reps[0].curves.size(), 6u);
  EXPECT_EQ(reps[0].curves[0].label, "carmab_w1");
  EXPECT_EQ(reps[0].curves[1].label, "ucb1_w1");
  EXPECT_EQ(reps[0].curves[3].label, "carmab_w2");
  const auto points = logged_time_points(cfg.horizon, true);
  for (std::size_t c = 0; c < 6; ++c) {
    const auto agg = aggregate_curve(reps, c);
    ASSERT_EQ(agg.size(), points.size());
    for (std::size_t i = 0; i < agg.size(); ++i) {
      EXPECT_EQ(agg[i].t, points[i]);
      EXPECT_EQ(agg[i].n, 3u);
      double mean = 0;
      for (const auto& rep : reps) mean += rep.curves[c].rows[i].avg_regret_mean;
      EXPECT_NEAR(agg[i].mean, mean / 3.0, 1e-12);
      EXPECT_GE(agg[i].std, 0.0);
    }
  }
  const fs::path dir = scratch_dir("shape");
  write_outputs(cfg, reps, dir);
  std::ifstream in(dir / "carmab_w2_rep1.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, kTraceHeader);
  std::size_t lines = 0;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, points.size());
  const json meta = json::parse(slurp(dir / "metadata.json"));
  EXPECT_EQ(meta["rng"], std::string(Rng::algorithm_id));
  EXPECT_EQ(meta["runs"].size(), 18u);
  EXPECT_EQ(meta["config_hash"].get<std::string>().size(), 16u);
}

TEST(Experiment, SeedChangesResults) {
  ExperimentConfig cfg = parse_config(kSmallMab);
  cfg.replications = 1;
  const auto x = run_replications(cfg, 1);
  cfg.base_seed = 12;
  const auto y = run_replications(cfg, 1);
  EXPECT_NE(x[0].curves[0].rows.back().cum_regret_noisy, y[0].curves[0].rows.back().cum_regret_noisy);
}

TEST(Experiment, AllModesRun) {
  const ExperimentConfig st = parse_config(R"({"mode": "st", "horizon": 400, "instance": {"window": 2,
      "noise_sigma": 0.1, "graph": {"vertices": ["s", "u", "v", "t"], "source": "s", "sink": "t",
      "edges": [["s", "u", 0.9], ["u", "t", 0.8], ["s", "v", 0.6], ["v", "t", 0.5], ["s", "t", 0.3]]}}})");
  EXPECT_EQ(run_replications(st, 1)[0].curves[0].label, "carmab_st_w2");

  const ExperimentConfig known = parse_config(R"({"mode": "cb-known", "horizon": 300, "instance": {"arms": 3,
      "dim": 4, "window": 2, "noise_sigma": 0.1, "contexts": {"source": "uniform_normalized"}}})");
  const auto rk = run_replications(known, 1);
  EXPECT_EQ(rk[0].curves[0].label, "carcb_w2");
  EXPECT_GE(rk[0].curves[0].rows.back().cum_regret_mean, -1e-9);

  const ExperimentConfig stoch = parse_config(R"({"mode": "cb-stochastic", "horizon": 300, "instance": {"arms": 2,
      "dim": 2, "window": 1, "theta_star": [0.6, 0.3],
      "contexts": {"source": "gaussian", "means": [[0.5, 0.1], [0.1, 0.5]], "alpha": 0.01}}})");
  EXPECT_EQ(run_replications(stoch, 1)[0].curves[0].rows.size(), 300u);
}

TEST(Experiment, OracleReport) {
  const ExperimentConfig cfg = parse_config(R"({"mode": "oracle", "horizon": 1000, "instance": {"mu": [1.0, 0.6],
      "window": 1, "congestion": "reciprocal_inclusive", "initial_history": [1]}})");
  const json report = oracle_report(cfg);
  ASSERT_EQ(report.size(), 1u);
  EXPECT_NEAR(report[0]["gain"].get<double>(), 0.8, 1e-12);
  EXPECT_EQ(report[0]["diameter"].get<std::size_t>(), 1u);
  EXPECT_NEAR(report[0]["dp_value"].get<double>(), 800.0, 1e-9);
  EXPECT_EQ(report[0]["cycle"].size(), 2u);
}

TEST(CheckSuite, DefaultsPassAtReducedSize) {
  CheckConfig cfg;
  cfg.karp_instances = 40;
  cfg.dp_instances = 20;
  cfg.comparator_instances = 20;
  cfg.coverage_replications = 20;
  cfg.coverage_horizon = 1500;
  const auto results = run_check_suite(cfg);
  ASSERT_EQ(results.size(), 6u);
  for (const PropertyResult& r : results) {
    EXPECT_TRUE(r.passed()) << r.name << ": " << r.detail;
    EXPECT_GT(r.cases, 0u);
  }
  const auto lines = check_report(results);
  EXPECT_EQ(lines.size(), 6u);
  EXPECT_TRUE(lines[0].contains("cases"));
}

TEST(CheckSuite, CorruptedMdpFailsDiameter) {
  const MabInstance inst({0.5, 0.4}, reciprocal_congestion(2, 2));
  const std::vector<double> table = inst.reward_table();
  DeterministicMdp mdp = build_mdp(2, 2, table);
  EXPECT_TRUE(check_diameter_of(mdp, 2).passed());
  // Every action returns to state 0: nothing else is reachable from it.
  for (auto& n : mdp.next) n = 0;
  EXPECT_FALSE(check_diameter_of(mdp, 2).passed());
}

TEST(Baselines, UcbFailsUnderCongestion) {
  double total = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng = Rng::derive(seed, 9);
    total += baseline_ucb1(two_arm(0.1), 20000, rng).mean_reward_between(10001, 20000);
  }
  EXPECT_LE(total / 5, 0.60);
}

TEST(Baselines, UcbRegretVanishesWithoutCongestion) {
  const MabInstance inst({0.9, 0.5, 0.4}, flat_congestion(3, 1), 0.1);
  Rng rng(3);
  const RunTrace run = baseline_ucb1(inst, 20000, rng);
  const ComparatorTrace comp = comparator_trace(inst, 20000);
  EXPECT_LE(RegretTrace(run, comp.rewards).average_mean_regret(20000), 0.01);
}

TEST(Baselines, RandomMatchesMixtureValue) {
  // Under uniform play the window is uniform over all K^w histories.
  Rng setup(5);
  for (int trial = 0; trial < 3; ++trial) {
    const MabInstance inst = random_instance(3, 2, setup, 0.1);
    const std::vector<double> table = inst.reward_table();
    const DeterministicMdp mdp = build_mdp(inst.n_arms, inst.window, table);
    double mixture = 0;
    for (std::size_t s = 0; s < mdp.n_states; ++s)
      for (ArmId a = 0; a < mdp.n_actions; ++a) mixture += mdp.reward_at(s, a);
    mixture /= static_cast<double>(mdp.n_states * mdp.n_actions);
    Rng rng(40 + trial);
    const RunTrace run = baseline_random(inst, 50000, rng);
    EXPECT_NEAR(run.mean_reward_between(1, 50000), mixture, 0.02 * std::max(mixture, 0.05));
  }
}

TEST(Baselines, GreedyEstimatesPairs) {
  Rng rng(6);
  const RunTrace run = baseline_greedy(two_arm(0.0), 200, rng);
  EXPECT_EQ(run.steps.size(), 200u);
  for (const StepRecord& s : run.steps) EXPECT_LE(s.reward_mean, 1.0);
}
