// Command-line front end for the congested bandit simulators.
//
// Exit codes: 0 success, 1 property check failed, 2 config error,
// 3 I/O error, 4 capacity error.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <utility>

#include "CLI11.hpp"

#include "congested/check.hpp"
#include "congested/errors.hpp"
#include "congested/harness/config.hpp"
#include "congested/harness/experiment.hpp"

namespace {

using namespace congested;
using namespace congested::harness;

struct Options {
  std::string config;
  std::string out;
  std::size_t jobs = 1;
  std::optional<std::uint64_t> seed;
  std::optional<bool> thin;
};

bool mode_allowed(const std::string& command, Mode mode) {
  if (command == "run-mab") return mode == Mode::mab;
  if (command == "run-st") return mode == Mode::st;
  if (command == "run-cb") return mode == Mode::cb_known || mode == Mode::cb_stochastic;
  if (command == "oracle") return mode == Mode::oracle || mode == Mode::mab;
  return mode == Mode::check;
}

int run_command(const std::string& command, const Options& opt) {
  ExperimentConfig cfg = load_config(opt.config);
  if (!mode_allowed(command, cfg.mode))
    throw config_error("config mode '" + std::string(mode_name(cfg.mode)) + "' does not match command " + command);
  if (opt.seed) {
    cfg.base_seed = *opt.seed;
    cfg.check.seed = *opt.seed;
  }
  if (opt.thin) cfg.thin = *opt.thin;
  const std::filesystem::path out = std::filesystem::path(opt.out.empty() ? cfg.output_dir : opt.out);

  if (command == "check") {
    const auto lines = check_report(run_check_suite(cfg.check));
    bool ok = true;
    for (const auto& line : lines) {
      std::cout << line.dump() << '\n';
      ok = ok && line.at("passed").get<bool>();
    }
    write_check_report(cfg, lines, out);
    return ok ? 0 : 1;
  }
  if (command == "oracle") {
    const json report = oracle_report(cfg);
    std::filesystem::create_directories(out);
    write_json(out / "oracle.json", report);
    std::cout << report.dump(2) << '\n';
    return 0;
  }
  const auto reps = run_replications(cfg, opt.jobs);
  write_outputs(cfg, reps, out);
  for (std::size_t c = 0; c < reps.front().curves.size(); ++c) {
    const auto rows = aggregate_curve(reps, c);
    std::cout << reps.front().curves[c].label << ": t=" << rows.back().t
              << " mean_avg_regret=" << format_double(rows.back().mean) << " (" << rows.back().n << " reps)\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Congested bandit simulators: CARMAB, CARMAB-ST, CARCB"};
  app.require_subcommand(1);
  Options opt;
  bool thin = false, no_thin = false;
  std::uint64_t seed = 0;

  const std::pair<const char*, const char*> commands[] = {
      {"run-mab", "CARMAB (plus baselines) on a multi-armed instance"},
      {"run-st", "CARMAB-ST on a routing graph"},
      {"run-cb", "CARCB with known or Gaussian contexts"},
      {"oracle", "exact gain, cycle, diameter and horizon optimum of an instance"},
      {"check", "randomized property checks against exhaustive oracles"}};
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opt.config, "JSON experiment config")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out, "output directory (overrides output.dir)");
    sub->add_option("--jobs", opt.jobs, "concurrent replications")->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "base seed (overrides replications.base_seed)");
    auto* t = sub->add_flag("--thin", thin, "thin logged time points geometrically past t=1000");
    auto* nt = sub->add_flag("--no-thin", no_thin, "log every time step");
    t->excludes(nt);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  CLI::App* chosen = app.get_subcommands().front();
  if (chosen->count("--seed")) opt.seed = seed;
  if (thin) opt.thin = true;
  if (no_thin) opt.thin = false;

  try {
    return run_command(chosen->get_name(), opt);
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const io_error& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return 3;
  } catch (const capacity_error& e) {
    std::cerr << "capacity error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
