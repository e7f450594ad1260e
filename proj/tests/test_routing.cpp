#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "congested/check.hpp"
#include "congested/oracles.hpp"
#include "congested/routing.hpp"

using namespace congested;

namespace {

RoutingGraph diamond(double su = 0.9, double ut = 0.8, double sv = 0.6, double vt = 0.5) {
  RoutingGraph g;
  g.vertices = {"s", "u", "v", "t"};
  g.edges = {{0, 1, su}, {1, 3, ut}, {0, 2, sv}, {2, 3, vt}};
  g.source = 0;
  g.sink = 3;
  return g;
}

// s -> t directly, or s -> u -> t.
RoutingGraph uneven() {
  RoutingGraph g;
  g.vertices = {"s", "u", "t"};
  g.edges = {{0, 2, 0.4}, {0, 1, 0.7}, {1, 2, 0.9}};
  g.source = 0;
  g.sink = 2;
  return g;
}

std::size_t oracle_paths(const RoutingGraph& g) {
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (const auto& e : g.edges) edges.emplace_back(e.from, e.to);
  return oracle::count_simple_paths(g.vertices.size(), edges, g.source, g.sink);
}

}  // namespace

TEST(EnumeratePaths, SmallGraphs) {
  EXPECT_EQ(enumerate_st_paths(diamond()).size(), 2u);
  RoutingGraph single;
  single.vertices = {"s", "t"};
  single.edges = {{0, 1, 0.5}};
  single.source = 0;
  single.sink = 1;
  EXPECT_EQ(enumerate_st_paths(single), (std::vector<std::vector<std::size_t>>{{0}}));
}

TEST(EnumeratePaths, SharedMiddleEdge) {
  // s->a, s->b, a->m, b->m, m->n (shared), n->t, n->c, c->t.
  RoutingGraph g;
  g.vertices = {"s", "a", "b", "m", "n", "c", "t"};
  g.edges = {{0, 1, .5}, {0, 2, .5}, {1, 3, .5}, {2, 3, .5}, {3, 4, .5}, {4, 6, .5}, {4, 5, .5}, {5, 6, .5}};
  g.source = 0;
  g.sink = 6;
  const auto paths = enumerate_st_paths(g);
  EXPECT_EQ(paths.size(), 4u);
  EXPECT_EQ(paths.size(), oracle_paths(g));
  EXPECT_TRUE(std::is_sorted(paths.begin(), paths.end()));
}

TEST(EnumeratePaths, RandomGraphsMatchDfsOracle) {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    RoutingGraph g;
    const std::size_t n = 3 + rng.below(4);
    for (std::size_t v = 0; v < n; ++v) g.vertices.push_back("v" + std::to_string(v));
    const std::size_t m = n + rng.below(2 * n);
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t a = rng.below(n), b = rng.below(n);
      if (a != b) g.edges.push_back({a, b, rng.uniform()});
    }
    g.source = 0;
    g.sink = n - 1;
    const std::size_t expected = oracle_paths(g);
    if (expected == 0) {
      EXPECT_THROW(enumerate_st_paths(g), std::domain_error);
      continue;
    }
    const auto paths = enumerate_st_paths(g);
    EXPECT_EQ(paths.size(), expected);
    EXPECT_TRUE(std::is_sorted(paths.begin(), paths.end()));
    for (const auto& p : paths) {
      EXPECT_EQ(g.edges[p.front()].from, g.source);
      EXPECT_EQ(g.edges[p.back()].to, g.sink);
      for (std::size_t i = 1; i < p.size(); ++i) EXPECT_EQ(g.edges[p[i - 1]].to, g.edges[p[i]].from);
    }
  }
}

TEST(EnumeratePaths, Errors) {
  RoutingGraph g = diamond();
  g.edges.pop_back();
  g.edges.erase(g.edges.begin() + 1);
  EXPECT_THROW(enumerate_st_paths(g), std::domain_error);
  EXPECT_THROW(enumerate_st_paths(diamond(), 1), capacity_error);
  RoutingGraph same = diamond();
  same.sink = 0;
  EXPECT_THROW(enumerate_st_paths(same), std::domain_error);
}

TEST(RoutingInstance, PadsShortPaths) {
  const RoutingInstance inst(uneven(), 2);
  EXPECT_EQ(inst.n_paths(), 2u);
  EXPECT_EQ(inst.path_length(), 2u);
  EXPECT_EQ(inst.n_real_edges(), 3u);
  EXPECT_EQ(inst.n_edges(), 4u);
  EXPECT_EQ(inst.path(0), (std::vector<std::size_t>{0, 3}));
  EXPECT_EQ(inst.path(1), (std::vector<std::size_t>{1, 2}));
  EXPECT_TRUE(inst.is_pad(3));
  for (std::size_t j = 0; j <= 2; ++j) {
    EXPECT_EQ(inst.congestion()(3, j), 1.0);
    EXPECT_EQ(inst.edge_reward(3, j), 0.0);
  }
}

TEST(PathReward, ZeroNoiseCases) {
  const RoutingInstance inst(diamond(), 2, std::nullopt, 0.0);
  Rng rng(1);
  // Path 0 is s->u->t; a window of path 1 leaves its edges uncounted.
  const History away(2, {1, 1});
  EXPECT_DOUBLE_EQ(path_reward(inst, away, 0, rng).total, 0.9 + 0.8);
  const History saturated(2, {0, 0});
  const PathReward r = path_reward(inst, saturated, 0, rng);
  EXPECT_DOUBLE_EQ(r.per_edge[0], 0.9 * 0.5);
  EXPECT_DOUBLE_EQ(r.per_edge[1], 0.8 * 0.5);
  EXPECT_DOUBLE_EQ(r.total, inst.mean_path_reward(saturated, 0));
}

TEST(PathReward, PadsPayExactlyZero) {
  const RoutingInstance inst(uneven(), 1, std::nullopt, 1.0);
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    const PathReward r = path_reward(inst, History(2, {1}), 0, rng);
    EXPECT_EQ(r.per_edge[1], 0.0);
    EXPECT_EQ(r.total, r.per_edge[0]);
  }
}

TEST(BuildStMdp, DiamondShapeAndGain) {
  const RoutingInstance inst(diamond(), 1, reciprocal_inclusive_congestion(4, 1));
  const std::vector<double> table = inst.edge_reward_table();
  const DeterministicMdp mdp = build_st_mdp(inst, table);
  EXPECT_EQ(mdp.n_states, 2u);
  EXPECT_EQ(mdp.n_actions, 2u);
  // Edge-disjoint paths: alternating avoids all congestion.
  EXPECT_NEAR(karp_max_mean_cycle(mdp).rho, (1.7 + 1.1) / 2.0, 1e-12);
  EXPECT_EQ(diameter(mdp), std::optional<std::size_t>(1));
}

TEST(BuildStMdp, RewardIsSumOverEdges) {
  const RoutingInstance inst(uneven(), 2);
  const std::vector<double> table = inst.edge_reward_table();
  const DeterministicMdp mdp = build_st_mdp(inst, table);
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    const History h = mdp.codec->decode(s);
    for (ArmId p = 0; p < 2; ++p) EXPECT_DOUBLE_EQ(mdp.reward_at(s, p), inst.mean_path_reward(h, p));
  }
  EXPECT_THROW(build_st_mdp(inst, std::vector<double>(3, 0.0)), std::invalid_argument);
}

TEST(BuildStMdp, KarpAndDiameterOnRandomGraphs) {
  Rng rng(23);
  int checked = 0;
  for (int trial = 0; trial < 200 && checked < 40; ++trial) {
    RoutingGraph g;
    const std::size_t n = 3 + rng.below(3);
    for (std::size_t v = 0; v < n; ++v) g.vertices.push_back("v" + std::to_string(v));
    for (std::size_t i = 0; i < 2 * n; ++i) {
      const std::size_t a = rng.below(n), b = rng.below(n);
      if (a < b) g.edges.push_back({a, b, rng.uniform()});
    }
    g.source = 0;
    g.sink = n - 1;
    if (oracle_paths(g) == 0) continue;
    const std::size_t window = 1 + rng.below(2);
    const RoutingInstance inst(g, window, random_congestion(g.edges.size(), window, rng));
    if (std::pow(inst.n_paths(), window) > 64) continue;
    const std::vector<double> table = inst.edge_reward_table();
    const DeterministicMdp mdp = build_st_mdp(inst, table);
    const std::optional<double> exact = oracle::max_mean_simple_cycle(mdp, 2'000'000);
    const double reference = exact ? *exact : oracle::max_mean_cycle_bisection(mdp);
    EXPECT_NEAR(karp_max_mean_cycle(mdp).rho, reference, exact ? 1e-9 : 1e-8);
    const auto d = diameter(mdp);
    ASSERT_TRUE(d.has_value());
    EXPECT_LE(*d, window);
    ++checked;
  }
  EXPECT_GE(checked, 20);
}

TEST(RunCarmabSt, SinglePathHasZeroRegret) {
  RoutingGraph g;
  g.vertices = {"s", "m", "t"};
  g.edges = {{0, 1, 0.7}, {1, 2, 0.4}};
  g.source = 0;
  g.sink = 2;
  const RoutingInstance inst(g, 2, std::nullopt, 0.3);
  CarmabConfig cfg;
  cfg.horizon = 300;
  Rng rng(1);
  const RoutingRun run = run_carmab_st(inst, cfg, rng);
  const double saturated = inst.mean_path_reward(History(1, {0, 0}), 0);
  for (const StepRecord& s : run.trace.steps) EXPECT_DOUBLE_EQ(s.reward_mean, saturated);
}

TEST(RunCarmabSt, PairCountIdentity) {
  const RoutingInstance inst(uneven(), 2, std::nullopt, 0.2);
  CarmabConfig cfg;
  cfg.horizon = 2345;
  Rng rng(3);
  const RoutingRun run = run_carmab_st(inst, cfg, rng);
  EXPECT_EQ(run.counts.total(), cfg.horizon * inst.path_length());
  EXPECT_LE(static_cast<double>(run.trace.episodes.size()),
            episode_bound(inst.n_edges(), inst.window(), cfg.horizon));
}

TEST(RunCarmabSt, LearnsAlternationOnDiamond) {
  const RoutingInstance inst(diamond(), 1, reciprocal_inclusive_congestion(4, 1), 0.1);
  CarmabConfig cfg;
  cfg.horizon = 20000;
  Rng rng(4);
  const RoutingRun run = run_carmab_st(inst, cfg, rng);
  EXPECT_GE(run.trace.mean_reward_between(10001, 20000), 0.95 * 1.4);
}

TEST(RunCarmabSt, Deterministic) {
  const RoutingInstance inst(uneven(), 2, std::nullopt, 0.5);
  CarmabConfig cfg;
  cfg.horizon = 1000;
  Rng a(8), b(8);
  const RoutingRun x = run_carmab_st(inst, cfg, a), y = run_carmab_st(inst, cfg, b);
  for (std::size_t i = 0; i < cfg.horizon; ++i) {
    EXPECT_EQ(x.trace.steps[i].action, y.trace.steps[i].action);
    EXPECT_EQ(x.trace.steps[i].reward_observed, y.trace.steps[i].reward_observed);
  }
}
