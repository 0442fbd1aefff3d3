#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mrex/events.hpp"
#include "mrex/mission.hpp"
#include "mrex/netstack.hpp"
#include "mrex/planner.hpp"
#include "mrex/radio.hpp"
#include "mrex/rng.hpp"
#include "mrex/scenario.hpp"
#include "mrex/world.hpp"

namespace mrex {

struct SimConfig {
  std::uint64_t master_seed = 1;
  std::optional<double> duration_s;  // overrides the scenario value
  std::optional<double> dt_s;
  std::filesystem::path out_dir;  // empty: no files written
  std::vector<std::pair<std::string, std::string>> overrides;
};

struct RunReport {
  double duration_s = 0.0;
  std::int64_t ticks = 0;
  std::vector<std::pair<double, double>> coverage_over_time;
  double final_coverage = 0.0;
  std::map<int, double> robot_distance_m;
  std::map<std::string, std::int64_t> enqueued_per_class;
  std::map<std::string, std::int64_t> delivered_per_class;
  std::map<std::string, std::int64_t> dropped_per_class;
  int radios_deployed = 0;
  std::map<std::string, std::int64_t> behavior_ticks;  // robot-ticks per behavior
  double total_information_gain_bits = 0.0;
  double initial_entropy_bits = 0.0;
  double final_entropy_bits = 0.0;
  std::uint64_t event_digest = 0;

  nlohmann::json to_json() const;
};

// Per-robot runtime state the tick pipeline carries between stages.
struct RobotRuntime {
  RobotSpec spec;
  Irm irm;
  std::unique_ptr<Reporter> reporter;
  std::unique_ptr<Executive> executive;
  int carried_radios = 0;
  std::vector<NodeId> route;  // nodes still to visit, front first
  int steps_since_replan = 0;
  bool force_replan = true;
  Policy active_policy;
  // Remaining prize nodes of the current global tour; re-pathed from the
  // robot's anchor every replan, re-solved on its own cadence.
  std::vector<NodeId> global_tour;
  bool has_global = false;
  double next_global_replan_s = 0.0;
  double next_plan_s = 0.0;  // idle backoff when there is nothing worth doing
  double next_pose_s = 0.0;
  double next_health_s = 0.0;
  std::optional<NodeId> pinned_target;  // comms/manual travel overrides planning
  bool wiggle = false;
  double last_commanded = 0.0;
};

// Deterministic tick pipeline over all modules:
//   1 planning, 2 mission executives, 3 world step, 4 IRM update + merge,
//   5 mesh/checkpoint refresh on deployment, 6 netstack transmit,
//   7 metrics sample.
class Simulation {
 public:
  Simulation(Scenario scenario, SimConfig config);

  // Runs to completion and writes report.json, events.jsonl,
  // delivery.jsonl, metrics.csv and planner.jsonl when out_dir is set.
  RunReport run();

  bool step_once();  // one tick; false when the mission clock has expired
  void write_outputs(const RunReport& report) const;

  const EventLog& event_log() const { return events_; }
  const std::vector<RobotState>& robots() const { return robots_; }
  const CoverageBelief& belief() const { return belief_; }
  const Irm& shared_irm() const { return shared_irm_; }
  const MeshState& mesh() const { return mesh_; }
  const Scenario& scenario() const { return scenario_; }
  std::int64_t tick() const { return tick_; }
  double now_s() const { return static_cast<double>(tick_) * dt_; }
  RunReport report() const { return report_; }
  const std::vector<RobotRuntime>& runtimes() const { return runtimes_; }

  // enqueued == delivered + queued + in-flight + dropped, per class.
  bool conservation_holds() const;

 private:
  void stage_planning();
  void stage_mission();
  void stage_world();
  void stage_irm();
  void rebuild_mesh();
  void stage_netstack();
  void stage_metrics();

  void plan_robot(RobotRuntime& rt, RobotState& robot);
  std::optional<MoveCommand> command_for(RobotRuntime& rt, RobotState& robot);
  bool robot_connected(const RobotState& robot, const RobotSpec& spec) const;

  Scenario scenario_;
  SimConfig config_;
  double dt_;
  double duration_s_;
  std::int64_t total_ticks_;
  std::int64_t tick_ = 0;

  RngStreams rngs_;
  std::vector<RobotState> robots_;
  std::vector<RobotRuntime> runtimes_;
  CoverageBelief belief_;
  Irm shared_irm_;
  std::vector<RadioNode> mesh_radios_;
  MeshState mesh_;
  std::uint64_t mesh_revision_ = 0;
  int next_radio_id_ = 1;

  std::map<int, std::unique_ptr<Receiver>> receivers_;  // base side, per robot
  EventLog events_;
  RunReport report_;
  std::vector<std::string> delivery_lines_;
  std::vector<std::string> planner_lines_;
  std::vector<std::string> metrics_rows_;
  std::vector<MoveCommand> pending_commands_;
  std::map<int, double> commanded_speed_this_tick_;
  std::size_t supervisor_cursor_ = 0;
  std::vector<SupervisorEvent> due_supervisor_events_;
};

struct ReplayVerdict {
  bool ok = false;
  std::int64_t first_divergent_tick = -1;
  std::string detail;
};

// Re-executes the run recorded in an events.jsonl (header line carries the
// scenario path, seed and clock) and compares events tick by tick.
ReplayVerdict replay_check(const std::filesystem::path& event_log_path,
                           std::optional<std::filesystem::path> scenario_override = std::nullopt);

}  // namespace mrex
