#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mrex/events.hpp"
#include "mrex/irm.hpp"
#include "mrex/netstack.hpp"
#include "mrex/radio.hpp"
#include "mrex/rng.hpp"
#include "mrex/world.hpp"

namespace mrex {

enum class BehaviorKind {
  Explore,
  DeployRadio,
  ReturnToComms,
  StuckRecovery,
  FallRecovery,
  AwaitSupervisor,
};
const char* to_string(BehaviorKind k);

enum class SupervisorCause { StuckRecoveryFailed, FallRecoveryFailed, EndogenousFault };
const char* to_string(SupervisorCause c);

struct MissionConfig {
  double t_c_db = 20.0;                    // Strong-comms SNR threshold
  std::int64_t t_b_low_bytes = 200000;     // resume-exploration watermark
  std::int64_t t_b_high_bytes = 1000000;   // return-to-comms trigger
  double wait_timeout_s = 60.0;            // buffer-stall retarget timeout
  double t_disc_s = 600.0;                 // disconnection trigger
  double stuck_window_s = 5.0;
  double stuck_threshold_mps = 0.3;
  double wiggle_duration_s = 4.0;
  int fall_attempts_n = 3;
  double p_selfright = 0.7;
  double p_unstick = 0.8;
  double p_jam = 0.05;
  double deploy_snr_db = 20.0;
  double overlap_fraction_max = 0.5;
  double health_period_s = 5.0;
  double heartbeat_timeout_s = 3.0;
  double restart_latency_s = 2.0;
  int restart_budget = 2;  // restarts per component before escalation
};

struct BehaviorState {
  BehaviorKind kind = BehaviorKind::Explore;
  // ReturnToComms
  NodeId target = -1;
  std::optional<std::int64_t> waiting_since;  // tick of arrival at target
  // StuckRecovery
  int stage = 0;
  // FallRecovery
  int attempts_used = 0;
  // AwaitSupervisor
  SupervisorCause cause = SupervisorCause::StuckRecoveryFailed;
};

struct MissionHealth {
  BehaviorKind behavior = BehaviorKind::Explore;
  std::int64_t buffer_size_bytes = 0;
  double time_since_last_connection_s = 0.0;
  double mission_progress = 0.0;  // fraction of known frontiers consumed
  std::string last_event;
};

struct SupervisorEvent {
  double time_s = 0.0;
  int robot_id = -1;
  std::string action;  // resume | manual_goal | abort | fail_component
  nlohmann::json params;
};

struct SpeedSample {
  double t_s = 0.0;
  double commanded = 0.0;
  double measured = 0.0;
};

// Moving-average discrepancy detector. False until the history covers a
// full window ending at now_s.
bool stuck_detect(std::span<const SpeedSample> history, double now_s, double window_s,
                  double threshold_mps);

// Area of the intersection of two coverage disks divided by the area of the
// candidate disk (x/y plane). 0 for a degenerate candidate.
double disk_overlap_fraction(const Vec3& candidate_center, double candidate_radius,
                             const Vec3& other_center, double other_radius);

// Deploy when the local bottleneck SNR is weak and no existing radio's
// predicted coverage disk overlaps the candidate's by more than the
// configured fraction.
bool should_deploy_radio(const Vec3& pose, double robot_tx_power_dbm, const MeshState& mesh,
                         const LinkModel& model, const OccupancyGrid* occupancy,
                         const MissionConfig& config);

enum class DeployOutcome { Deployed, Jammed, Empty };
// One drop attempt; jams with probability p_jam.
DeployOutcome deploy_radio(int& carried_radios, RngStream& rng, double p_jam);

// Endogenous-fault watchdog over simulated software components.
class Watchdog {
 public:
  Watchdog() = default;
  Watchdog(std::vector<std::string> components, const MissionConfig& config);

  // Marks a component failed; persistent failures resurface after every
  // restart until the budget runs out.
  void fail_component(const std::string& component, bool persistent);

  struct Action {
    std::vector<std::string> restarted;
    bool escalate = false;
  };
  Action step(double now_s);

 private:
  struct Component {
    double last_heartbeat_s = 0.0;
    bool failed = false;
    bool persistent = false;
    double revive_at_s = -1.0;
    int restarts_used = 0;
  };
  std::map<std::string, Component> components_;
  double heartbeat_timeout_s_ = 3.0;
  double restart_latency_s_ = 2.0;
  int restart_budget_ = 2;
};

// Everything the executive needs to evaluate its monitors for one tick.
struct ExecutiveContext {
  const RobotState* robot = nullptr;
  Vec3 robot_pos;
  double robot_tx_power_dbm = 20.0;
  NetStats net_stats;
  const Irm* irm = nullptr;
  const MeshState* mesh = nullptr;
  const LinkModel* link_model = nullptr;
  const OccupancyGrid* occupancy = nullptr;
  int carried_radios = 0;
  bool connected = false;
  double now_s = 0.0;
  std::int64_t tick = 0;
  std::span<const SupervisorEvent> supervisor_events;
};

// What the harness must do with the robot this tick.
struct ExecutiveDecision {
  BehaviorState state;
  std::optional<DeployOutcome> deploy_outcome;  // a drop happened this tick
  bool planner_reset = false;
  bool wiggle = false;
  bool clear_fault = false;
  bool out_of_service = false;
  std::optional<NodeId> travel_target;
  std::vector<SimEvent> events;
};

// Per-robot behavior executive. Monitors run in fixed priority order
// (fall > stuck > comms > radio-deploy > explore) and at most one behavior
// transition is taken per tick.
class Executive {
 public:
  Executive(int robot_id, Platform platform, MissionConfig config,
            std::vector<std::string> watchdog_components = {"odometry", "mapper", "planner"});

  const BehaviorState& state() const { return state_; }
  const MissionConfig& config() const { return config_; }

  ExecutiveDecision tick(const ExecutiveContext& ctx, RngStream& mission_rng);

  void record_speed_sample(double now_s, double commanded, double measured);
  const std::vector<SpeedSample>& speed_history() const { return speed_history_; }

  MissionHealth mission_health(const ExecutiveContext& ctx) const;
  double time_since_last_connection_s(double now_s) const;
  void note_event(const std::string& description) { last_event_ = description; }

 private:
  bool stuck_monitor(const ExecutiveContext& ctx) const;
  void transition(BehaviorState next, const ExecutiveContext& ctx, ExecutiveDecision& out);

  int robot_id_;
  Platform platform_;
  MissionConfig config_;
  BehaviorState state_;
  std::optional<BehaviorState> resume_after_recovery_;
  Watchdog watchdog_;
  std::vector<SpeedSample> speed_history_;
  std::string last_event_;

  // ReturnToComms bookkeeping (simulated seconds)
  double waiting_since_s_ = 0.0;
  double last_buffer_decrease_s_ = 0.0;
  std::int64_t prev_buffer_bytes_ = -1;
  bool rtc_cause_buffer_ = true;

  // StuckRecovery bookkeeping
  double stage_until_s_ = 0.0;
  bool wiggle_phase_done_ = false;

  double last_connected_s_ = 0.0;
  std::optional<NodeId> manual_goal_;
};

}  // namespace mrex
