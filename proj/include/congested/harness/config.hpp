#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "congested/carcb.hpp"
#include "congested/check.hpp"
#include "congested/env.hpp"
#include "congested/errors.hpp"
#include "congested/mdp.hpp"
#include "congested/routing.hpp"

namespace congested::harness {

using nlohmann::json;

enum class Mode { mab, st, cb_known, cb_stochastic, oracle, check };

inline std::string_view mode_name(Mode m) {
  switch (m) {
    case Mode::mab: return "mab";
    case Mode::st: return "st";
    case Mode::cb_known: return "cb-known";
    case Mode::cb_stochastic: return "cb-stochastic";
    case Mode::oracle: return "oracle";
    case Mode::check: return "check";
  }
  return "?";
}

inline Mode parse_mode(std::string_view s) {
  for (Mode m : {Mode::mab, Mode::st, Mode::cb_known, Mode::cb_stochastic, Mode::oracle, Mode::check})
    if (mode_name(m) == s) return m;
  throw config_error("unknown mode '" + std::string(s) + "'");
}

/// Named congestion family or explicit per-arm rows.
struct CongestionSpec {
  std::string kind = "reciprocal";  // reciprocal | reciprocal_inclusive | none | rows
  std::vector<std::vector<double>> rows;

  CongestionTable build(std::size_t n_arms, std::size_t window) const {
    if (kind == "reciprocal") return reciprocal_congestion(n_arms, window);
    if (kind == "reciprocal_inclusive") return reciprocal_inclusive_congestion(n_arms, window);
    if (kind == "none") return flat_congestion(n_arms, window);
    CongestionTable table = CongestionTable::from_rows(rows);
    if (table.n_arms() != n_arms || table.window() != window)
      throw config_error("congestion rows must be " + std::to_string(n_arms) + " x " + std::to_string(window + 1));
    return table;
  }
};

struct ContextSpec {
  enum class Source { fixed_sequence, gaussian, uniform_normalized };
  Source source = Source::uniform_normalized;
  /// fixed_sequence: [t][a][d] features, horizon rows.
  std::vector<double> features;
  std::size_t rounds = 0;
  /// gaussian
  std::vector<Vector> means;
  std::vector<Matrix> covariances;
};

struct ExperimentConfig {
  Mode mode = Mode::mab;
  std::size_t horizon = 1000;

  // instance
  std::size_t arms = 0;
  std::vector<std::size_t> windows{1};
  /// nullopt: means drawn uniformly on [0, 1] per replication.
  std::optional<std::vector<double>> mu;
  CongestionSpec congestion;
  double noise_sigma = 1.0;
  std::vector<ArmId> initial_history;
  std::optional<RoutingGraph> graph;
  std::size_t dim = 0;
  /// nullopt: a random unit-norm positive vector per replication.
  std::optional<std::vector<double>> theta_star;
  ContextSpec contexts;

  // algorithm
  double delta = 0.1;
  double width_constant = 10.0;
  std::size_t max_episodes = 0;
  double ridge = 1e-8;
  bool clip_features = true;

  std::vector<std::string> baselines;
  std::size_t replications = 1;
  std::uint64_t base_seed = 1;
  std::string output_dir = "out";
  bool thin = true;
  PlannerLimits limits{};
  CheckConfig check{};

  /// FNV-1a over the raw config bytes.
  std::uint64_t hash = 0;
};

inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace detail {

inline void allow_only(const json& j, std::string_view where, std::initializer_list<std::string_view> keys) {
  if (!j.is_object()) throw config_error(std::string(where) + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (std::string_view k : keys) known = known || key == k;
    if (!known) throw config_error(std::string(where) + ": unknown field '" + key + "'");
  }
}

template <typename T>
T get(const json& j, std::string_view where) {
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    throw config_error(std::string(where) + ": " + e.what());
  }
}

inline std::size_t get_count(const json& j, std::string_view where) {
  if (!j.is_number_integer() || j.get<std::int64_t>() < 0)
    throw config_error(std::string(where) + ": expected a non-negative integer");
  return j.get<std::size_t>();
}

inline double get_number(const json& j, std::string_view where) {
  if (!j.is_number()) throw config_error(std::string(where) + ": expected a number");
  return j.get<double>();
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

inline std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open CSV '" + path.string() + "'");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

inline double parse_double(const std::string& s, std::string_view where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw config_error(std::string(where) + ": bad number '" + s + "'");
  }
}

inline std::size_t parse_index(const std::string& s, std::string_view where) {
  const double v = parse_double(s, where);
  if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v)))
    throw config_error(std::string(where) + ": bad index '" + s + "'");
  return static_cast<std::size_t>(v);
}

inline CongestionSpec parse_congestion(const json& j) {
  CongestionSpec spec;
  if (j.is_string()) {
    spec.kind = j.get<std::string>();
    if (spec.kind != "reciprocal" && spec.kind != "reciprocal_inclusive" && spec.kind != "none")
      throw config_error("congestion: unknown family '" + spec.kind + "'");
    return spec;
  }
  spec.kind = "rows";
  spec.rows = get<std::vector<std::vector<double>>>(j, "congestion");
  return spec;
}

inline std::size_t vertex_index(const json& j, const std::vector<std::string>& names) {
  if (j.is_number_integer()) {
    const std::size_t v = get_count(j, "graph.edges");
    if (v >= names.size()) throw config_error("graph.edges: vertex index out of range");
    return v;
  }
  const std::string name = get<std::string>(j, "graph.edges");
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  throw config_error("graph: unknown vertex '" + name + "'");
}

inline RoutingGraph parse_graph(const json& j, const std::filesystem::path& base) {
  allow_only(j, "graph", {"vertices", "edges", "edges_csv", "source", "sink"});
  RoutingGraph g;
  if (!j.contains("vertices")) throw config_error("graph: 'vertices' required");
  g.vertices = get<std::vector<std::string>>(j.at("vertices"), "graph.vertices");
  if (j.contains("edges") == j.contains("edges_csv"))
    throw config_error("graph: exactly one of 'edges' or 'edges_csv' required");
  if (j.contains("edges")) {
    for (const json& e : j.at("edges")) {
      if (!e.is_array() || e.size() != 3) throw config_error("graph.edges: each edge is [from, to, mu]");
      g.edges.push_back({vertex_index(e[0], g.vertices), vertex_index(e[1], g.vertices), get_number(e[2], "graph.edges")});
    }
  } else {
    for (const auto& row : read_csv(resolve(base, get<std::string>(j.at("edges_csv"), "graph.edges_csv")))) {
      if (row.size() != 3) throw config_error("graph.edges_csv: rows are from,to,mu");
      g.edges.push_back({vertex_index(json(row[0]), g.vertices), vertex_index(json(row[1]), g.vertices),
                         parse_double(row[2], "graph.edges_csv")});
    }
  }
  if (!j.contains("source") || !j.contains("sink")) throw config_error("graph: 'source' and 'sink' required");
  g.source = vertex_index(j.at("source"), g.vertices);
  g.sink = vertex_index(j.at("sink"), g.vertices);
  try {
    g.validate();
  } catch (const std::logic_error& e) {
    throw config_error(e.what());
  }
  return g;
}

inline ContextSpec parse_contexts(const json& j, std::size_t arms, std::size_t dim, const std::filesystem::path& base) {
  allow_only(j, "contexts", {"source", "features", "csv", "means", "covariances", "alpha"});
  ContextSpec spec;
  const std::string source = j.contains("source") ? get<std::string>(j.at("source"), "contexts.source") : "";
  if (source == "uniform_normalized") {
    spec.source = ContextSpec::Source::uniform_normalized;
  } else if (source == "fixed_sequence") {
    spec.source = ContextSpec::Source::fixed_sequence;
    if (j.contains("features") == j.contains("csv"))
      throw config_error("contexts: fixed_sequence needs exactly one of 'features' or 'csv'");
    if (j.contains("features")) {
      const auto rounds = get<std::vector<std::vector<std::vector<double>>>>(j.at("features"), "contexts.features");
      for (const auto& per_round : rounds) {
        if (per_round.size() != arms) throw config_error("contexts.features: each round needs one vector per arm");
        for (const auto& x : per_round) {
          if (x.size() != dim) throw config_error("contexts.features: vector length must equal dim");
          spec.features.insert(spec.features.end(), x.begin(), x.end());
        }
      }
      spec.rounds = rounds.size();
    } else {
      const auto rows = read_csv(resolve(base, get<std::string>(j.at("csv"), "contexts.csv")));
      std::size_t rounds = 0;
      for (const auto& row : rows) {
        if (row.size() != dim + 2) throw config_error("contexts.csv: rows are t,arm,f1..fd");
        rounds = std::max(rounds, parse_index(row[0], "contexts.csv"));
      }
      spec.rounds = rounds;
      spec.features.assign(rounds * arms * dim, 0.0);
      std::vector<char> seen(rounds * arms, 0);
      for (const auto& row : rows) {
        const std::size_t t = parse_index(row[0], "contexts.csv");
        const std::size_t a = parse_index(row[1], "contexts.csv");
        if (t < 1 || a >= arms) throw config_error("contexts.csv: t is 1-based and arm below arms");
        if (seen[(t - 1) * arms + a]++) throw config_error("contexts.csv: duplicate (t, arm)");
        for (std::size_t k = 0; k < dim; ++k)
          spec.features[((t - 1) * arms + a) * dim + k] = parse_double(row[2 + k], "contexts.csv");
      }
      if (std::find(seen.begin(), seen.end(), 0) != seen.end())
        throw config_error("contexts.csv: every (t, arm) must be present");
    }
  } else if (source == "gaussian") {
    spec.source = ContextSpec::Source::gaussian;
    const auto means = get<std::vector<std::vector<double>>>(j.at("means"), "contexts.means");
    if (means.size() != arms) throw config_error("contexts.means: one mean per arm");
    for (const auto& m : means) {
      if (m.size() != dim) throw config_error("contexts.means: vector length must equal dim");
      spec.means.push_back(Eigen::Map<const Vector>(m.data(), static_cast<Eigen::Index>(dim)));
    }
    if (j.contains("covariances") == j.contains("alpha"))
      throw config_error("contexts: gaussian needs exactly one of 'covariances' or 'alpha'");
    if (j.contains("alpha")) {
      const double alpha = get_number(j.at("alpha"), "contexts.alpha");
      for (std::size_t a = 0; a < arms; ++a)
        spec.covariances.push_back(alpha * Matrix::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim)));
    } else {
      const auto covs = get<std::vector<std::vector<std::vector<double>>>>(j.at("covariances"), "contexts.covariances");
      if (covs.size() != arms) throw config_error("contexts.covariances: one matrix per arm");
      for (const auto& rows : covs) {
        Matrix m(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
        if (rows.size() != dim) throw config_error("contexts.covariances: matrices are dim x dim");
        for (std::size_t r = 0; r < dim; ++r) {
          if (rows[r].size() != dim) throw config_error("contexts.covariances: matrices are dim x dim");
          for (std::size_t c = 0; c < dim; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        }
        spec.covariances.push_back(std::move(m));
      }
    }
  } else {
    throw config_error("contexts.source must be fixed_sequence, gaussian or uniform_normalized");
  }
  return spec;
}

inline CheckConfig parse_check(const json& j) {
  allow_only(j, "check", {"seed", "karp_instances", "dp_instances", "comparator_instances", "comparator_horizon",
                          "coverage_replications", "coverage_horizon", "coverage_target", "delta", "width_constant",
                          "noise_sigma"});
  CheckConfig c;
  if (j.contains("seed")) c.seed = get<std::uint64_t>(j.at("seed"), "check.seed");
  if (j.contains("karp_instances")) c.karp_instances = get_count(j.at("karp_instances"), "check.karp_instances");
  if (j.contains("dp_instances")) c.dp_instances = get_count(j.at("dp_instances"), "check.dp_instances");
  if (j.contains("comparator_instances"))
    c.comparator_instances = get_count(j.at("comparator_instances"), "check.comparator_instances");
  if (j.contains("comparator_horizon"))
    c.comparator_horizon = get_count(j.at("comparator_horizon"), "check.comparator_horizon");
  if (j.contains("coverage_replications"))
    c.coverage_replications = get_count(j.at("coverage_replications"), "check.coverage_replications");
  if (j.contains("coverage_horizon")) c.coverage_horizon = get_count(j.at("coverage_horizon"), "check.coverage_horizon");
  if (j.contains("coverage_target")) c.coverage_target = get_number(j.at("coverage_target"), "check.coverage_target");
  if (j.contains("delta")) c.delta = get_number(j.at("delta"), "check.delta");
  if (j.contains("width_constant")) c.width_constant = get_number(j.at("width_constant"), "check.width_constant");
  if (j.contains("noise_sigma")) c.noise_sigma = get_number(j.at("noise_sigma"), "check.noise_sigma");
  return c;
}

}  // namespace detail

/// Parses a JSON experiment config. Relative CSV paths resolve against
/// `base_dir`. Unknown fields anywhere are rejected.
inline ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = ".") {
  using namespace detail;
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw config_error(std::string("invalid JSON: ") + e.what());
  }
  allow_only(root, "config", {"mode", "horizon", "instance", "algorithm", "baselines", "replications", "output",
                              "limits", "check"});
  ExperimentConfig cfg;
  cfg.hash = fnv1a(text);
  if (!root.contains("mode")) throw config_error("config: 'mode' required");
  cfg.mode = parse_mode(get<std::string>(root.at("mode"), "mode"));
  if (root.contains("horizon")) cfg.horizon = get_count(root.at("horizon"), "horizon");
  if (cfg.horizon == 0) throw config_error("horizon must be >= 1");

  if (root.contains("limits")) {
    const json& l = root.at("limits");
    allow_only(l, "limits", {"max_states", "max_table_cells"});
    if (l.contains("max_states")) cfg.limits.max_states = get_count(l.at("max_states"), "limits.max_states");
    if (l.contains("max_table_cells"))
      cfg.limits.max_table_cells = get_count(l.at("max_table_cells"), "limits.max_table_cells");
  }
  if (root.contains("check")) cfg.check = parse_check(root.at("check"));

  if (root.contains("algorithm")) {
    const json& a = root.at("algorithm");
    allow_only(a, "algorithm", {"delta", "width_constant", "max_episodes", "ridge", "clip_features"});
    if (a.contains("delta")) cfg.delta = get_number(a.at("delta"), "algorithm.delta");
    if (a.contains("width_constant")) cfg.width_constant = get_number(a.at("width_constant"), "algorithm.width_constant");
    if (a.contains("max_episodes")) cfg.max_episodes = get_count(a.at("max_episodes"), "algorithm.max_episodes");
    if (a.contains("ridge")) cfg.ridge = get_number(a.at("ridge"), "algorithm.ridge");
    if (a.contains("clip_features")) cfg.clip_features = get<bool>(a.at("clip_features"), "algorithm.clip_features");
    if (!(cfg.delta > 0.0 && cfg.delta < 1.0)) throw config_error("algorithm.delta must be in (0, 1)");
    if (!(cfg.width_constant > 0.0)) throw config_error("algorithm.width_constant must be positive");
    if (cfg.ridge < 0.0) throw config_error("algorithm.ridge must be >= 0");
  }

  if (root.contains("baselines")) {
    cfg.baselines = get<std::vector<std::string>>(root.at("baselines"), "baselines");
    for (const std::string& b : cfg.baselines)
      if (b != "ucb1" && b != "random" && b != "greedy") throw config_error("baselines: unknown baseline '" + b + "'");
    if (!cfg.baselines.empty() && cfg.mode != Mode::mab) throw config_error("baselines apply to mode mab only");
  }

  if (root.contains("replications")) {
    const json& r = root.at("replications");
    allow_only(r, "replications", {"count", "base_seed"});
    if (r.contains("count")) cfg.replications = get_count(r.at("count"), "replications.count");
    if (r.contains("base_seed")) cfg.base_seed = get<std::uint64_t>(r.at("base_seed"), "replications.base_seed");
    if (cfg.replications == 0) throw config_error("replications.count must be >= 1");
  }
  if (root.contains("output")) {
    const json& o = root.at("output");
    allow_only(o, "output", {"dir", "thin"});
    if (o.contains("dir")) cfg.output_dir = get<std::string>(o.at("dir"), "output.dir");
    if (o.contains("thin")) cfg.thin = get<bool>(o.at("thin"), "output.thin");
  }

  if (cfg.mode == Mode::check) {
    if (root.contains("instance")) throw config_error("mode check takes no instance");
    return cfg;
  }
  if (!root.contains("instance")) throw config_error("config: 'instance' required");
  const json& inst = root.at("instance");
  allow_only(inst, "instance", {"arms", "window", "mu", "congestion", "noise_sigma", "initial_history", "graph", "dim",
                                "theta_star", "contexts"});

  if (inst.contains("window")) {
    const json& w = inst.at("window");
    cfg.windows = w.is_array() ? get<std::vector<std::size_t>>(w, "instance.window")
                               : std::vector<std::size_t>{get_count(w, "instance.window")};
    if (cfg.windows.empty()) throw config_error("instance.window: empty list");
    for (std::size_t v : cfg.windows)
      if (v == 0) throw config_error("instance.window must be >= 1");
  }
  if (inst.contains("congestion")) cfg.congestion = parse_congestion(inst.at("congestion"));
  if (cfg.congestion.kind == "rows" && cfg.windows.size() != 1)
    throw config_error("explicit congestion rows need a single window");
  if (inst.contains("noise_sigma")) cfg.noise_sigma = get_number(inst.at("noise_sigma"), "instance.noise_sigma");
  if (!(cfg.noise_sigma >= 0.0)) throw config_error("instance.noise_sigma must be >= 0");
  if (inst.contains("initial_history")) {
    cfg.initial_history = get<std::vector<ArmId>>(inst.at("initial_history"), "instance.initial_history");
    if (cfg.windows.size() != 1 || cfg.initial_history.size() != cfg.windows.front())
      throw config_error("instance.initial_history length must equal the (single) window");
  }
  if (inst.contains("arms")) cfg.arms = get_count(inst.at("arms"), "instance.arms");

  const bool is_cb = cfg.mode == Mode::cb_known || cfg.mode == Mode::cb_stochastic;
  if (cfg.mode == Mode::st) {
    if (!inst.contains("graph")) throw config_error("mode st requires instance.graph");
    for (const char* k : {"arms", "mu", "dim", "theta_star", "contexts"})
      if (inst.contains(k)) throw config_error(std::string("instance.") + k + " not used in mode st");
    cfg.graph = parse_graph(inst.at("graph"), base_dir);
  } else if (is_cb) {
    for (const char* k : {"mu", "graph"})
      if (inst.contains(k)) throw config_error(std::string("instance.") + k + " not used in contextual modes");
    if (cfg.arms == 0) throw config_error("instance.arms required");
    if (!inst.contains("dim")) throw config_error("instance.dim required");
    cfg.dim = get_count(inst.at("dim"), "instance.dim");
    if (cfg.dim == 0) throw config_error("instance.dim must be >= 1");
    if (inst.contains("theta_star") && !inst.at("theta_star").is_string()) {
      cfg.theta_star = get<std::vector<double>>(inst.at("theta_star"), "instance.theta_star");
      if (cfg.theta_star->size() != cfg.dim) throw config_error("instance.theta_star length must equal dim");
    } else if (inst.contains("theta_star") && inst.at("theta_star").get<std::string>() != "random") {
      throw config_error("instance.theta_star: array or \"random\"");
    }
    if (!inst.contains("contexts")) throw config_error("instance.contexts required");
    cfg.contexts = parse_contexts(inst.at("contexts"), cfg.arms, cfg.dim, base_dir);
    const bool gaussian = cfg.contexts.source == ContextSpec::Source::gaussian;
    if (gaussian != (cfg.mode == Mode::cb_stochastic))
      throw config_error("cb-stochastic uses gaussian contexts; cb-known uses fixed_sequence or uniform_normalized");
    if (cfg.contexts.source == ContextSpec::Source::fixed_sequence && cfg.contexts.rounds < cfg.horizon)
      throw config_error("contexts: fixed sequence shorter than horizon");
  } else {
    for (const char* k : {"graph", "dim", "theta_star", "contexts"})
      if (inst.contains(k)) throw config_error(std::string("instance.") + k + " not used in mode " + std::string(mode_name(cfg.mode)));
    if (inst.contains("mu") && !inst.at("mu").is_string()) {
      cfg.mu = get<std::vector<double>>(inst.at("mu"), "instance.mu");
      if (cfg.arms == 0) cfg.arms = cfg.mu->size();
      if (cfg.mu->size() != cfg.arms) throw config_error("instance.mu length must equal arms");
    } else if (inst.contains("mu") && inst.at("mu").get<std::string>() != "uniform") {
      throw config_error("instance.mu: array or \"uniform\"");
    }
    if (cfg.arms == 0) throw config_error("instance.arms (or a mu array) required");
  }

  // Build one instance per window now so that value errors surface as
  // config errors rather than mid-run.
  try {
    for (std::size_t w : cfg.windows) {
      if (cfg.mode == Mode::st) {
        const std::size_t edges = cfg.graph->edges.size();
        (void)RoutingInstance(*cfg.graph, w, cfg.congestion.kind == "reciprocal" ? std::nullopt
                                                                                 : std::optional(cfg.congestion.build(edges, w)),
                              cfg.noise_sigma, cfg.initial_history);
      } else {
        const CongestionTable table = cfg.congestion.build(cfg.arms, w);
        if (cfg.mu) (void)MabInstance(*cfg.mu, table, cfg.noise_sigma, cfg.initial_history);
        if (!cfg.initial_history.empty()) (void)History(cfg.arms, cfg.initial_history);
      }
    }
    if (is_cb) {
      if (cfg.theta_star && Eigen::Map<const Vector>(cfg.theta_star->data(), static_cast<Eigen::Index>(cfg.dim)).norm() > 1.0 + 1e-12)
        throw config_error("instance.theta_star norm above 1");
      if (cfg.contexts.source == ContextSpec::Source::gaussian) (void)ContextDistribution(cfg.contexts.means, cfg.contexts.covariances);
    }
  } catch (const capacity_error&) {
    throw;
  } catch (const config_error&) {
    throw;
  } catch (const std::exception& e) {
    throw config_error(e.what());
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("cannot read config '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

}  // namespace congested::harness
