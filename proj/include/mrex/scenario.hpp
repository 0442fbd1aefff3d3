#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mrex/mission.hpp"
#include "mrex/netstack.hpp"
#include "mrex/planner.hpp"
#include "mrex/radio.hpp"
#include "mrex/world.hpp"

namespace mrex {

struct RobotSpec {
  int robot_id = 0;
  Platform platform = Platform::Wheeled;
  int carried_radios = 0;
  double tx_power_dbm = 20.0;
};

// Everything tunable from the scenario file's "params" object.
struct ScenarioParams {
  double dt_s = 0.5;
  double duration_s = 600.0;
  double slip_max = 0.1;
  std::optional<double> slip_max_wheeled;
  std::optional<double> slip_max_legged;
  std::optional<double> slip_max_aerial;
  double eps_cov = 1e-6;
  double initial_covered_prob = 0.5;
  double sensor_max_m = 20.0;
  double kappa = 2.0;
  double local_window_m = 20.0;
  double frame_loss_rate = 0.0;
  double global_replan_interval_s = 30.0;
  int gls_iterations = 2000;
  double tour_gamma = 0.99;
  // Criterion-12 style baseline: force the global policy and disable
  // frontloading (gamma = 1).
  bool frontier_greedy_baseline = false;
  // Traffic model
  std::int64_t map_scan_bytes = 20000;
  std::int64_t pose_bytes = 256;
  double pose_period_s = 2.0;
  std::int64_t health_bytes = 200;

  LinkModel link;
  ReporterConfig reporter;
  MissionConfig mission;
  RewardParams reward;
  RolloutParams rollout;
};

struct Scenario {
  WorldGraph world;
  std::vector<RobotSpec> robots;
  double base_tx_power_dbm = 20.0;
  std::vector<SupervisorEvent> supervisor_script;
  ScenarioParams params;
  std::string source_path;
  std::uint64_t content_digest = 0;
};

// Parses and validates a scenario file; throws ValidationError with a
// line/field diagnostic on malformed input. Robots all start at base.
Scenario load_scenario(const std::filesystem::path& path);
Scenario load_scenario_json(const std::string& text, const std::string& source_name);

// key=value overrides for a subset of params (e.g. "duration_s=120",
// "mission.p_jam=0.5"). Unknown keys raise ValidationError.
void apply_override(ScenarioParams& params, const std::string& key, const std::string& value);

}  // namespace mrex
