#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mrex/sim.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

std::vector<std::pair<std::string, std::string>> parse_overrides(
    const std::vector<std::string>& raw) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& s : raw) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw mrex::ValidationError("override must be key=value, got '" + s + "'");
    }
    out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  return out;
}

int cmd_run(const std::string& scenario_path, std::uint64_t seed, double duration, double dt,
            const std::string& out_dir, const std::vector<std::string>& overrides) {
  mrex::Scenario scenario = mrex::load_scenario(scenario_path);
  mrex::SimConfig config;
  config.master_seed = seed;
  if (duration > 0) config.duration_s = duration;
  if (dt > 0) config.dt_s = dt;
  config.out_dir = out_dir;
  config.overrides = parse_overrides(overrides);

  mrex::Simulation sim(std::move(scenario), config);
  const mrex::RunReport report = sim.run();
  std::cout << "ticks=" << report.ticks << " coverage=" << report.final_coverage
            << " radios=" << report.radios_deployed << " digest=" << report.event_digest
            << '\n';
  if (!out_dir.empty()) std::cout << "outputs written to " << out_dir << '\n';
  return kExitOk;
}

int cmd_validate(const std::string& scenario_path) {
  const mrex::Scenario scenario = mrex::load_scenario(scenario_path);
  std::cout << "ok: " << scenario.world.node_count() << " nodes, "
            << scenario.world.edges().size() << " edges, " << scenario.robots.size()
            << " robots\n";
  return kExitOk;
}

int cmd_replay(const std::string& log_path, const std::string& scenario_path) {
  std::optional<std::filesystem::path> override_path;
  if (!scenario_path.empty()) override_path = scenario_path;
  const mrex::ReplayVerdict verdict = mrex::replay_check(log_path, override_path);
  if (verdict.ok) {
    std::cout << "replay ok\n";
    return kExitOk;
  }
  std::cout << "replay FAILED at tick " << verdict.first_divergent_tick << ": "
            << verdict.detail << '\n';
  return kExitRuntime;
}

}  // namespace

// Brute-force oracles used by the acceptance suite, runnable standalone for
// inspection (oracle_cmd.cpp).
int cmd_oracle(const std::string& name, std::uint64_t seed, int count);

int main(int argc, char** argv) {
  CLI::App app{"communication-aware multi-robot exploration simulator"};
  app.require_subcommand(1);

  std::string scenario_path, out_dir, log_path, oracle_name = "tour";
  std::uint64_t seed = 1;
  double duration = 0, dt = 0;
  int count = 20;
  std::vector<std::string> overrides;

  auto* run = app.add_subcommand("run", "run a scenario");
  run->add_option("--scenario", scenario_path, "scenario JSON")->required();
  run->add_option("--seed", seed, "master seed");
  run->add_option("--duration", duration, "mission seconds (override)");
  run->add_option("--dt", dt, "tick seconds (override)");
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--override", overrides, "key=value parameter override");

  auto* validate = app.add_subcommand("validate", "validate a scenario file");
  validate->add_option("--scenario", scenario_path, "scenario JSON")->required();

  auto* replay = app.add_subcommand("replay", "verify an event log reproduces");
  replay->add_option("--log", log_path, "events.jsonl from a run")->required();
  replay->add_option("--scenario", scenario_path, "scenario path override");

  auto* oracle = app.add_subcommand("oracle", "run a brute-force oracle suite");
  oracle->add_option("--name", oracle_name, "tour | widest | entropy");
  oracle->add_option("--seed", seed, "rng seed");
  oracle->add_option("--count", count, "instances");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(scenario_path, seed, duration, dt, out_dir, overrides);
    if (validate->parsed()) return cmd_validate(scenario_path);
    if (replay->parsed()) return cmd_replay(log_path, scenario_path);
    if (oracle->parsed()) return cmd_oracle(oracle_name, seed, count);
  } catch (const mrex::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
