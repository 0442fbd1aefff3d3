#include "mrex/mission.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mrex {

const char* to_string(BehaviorKind k) {
  switch (k) {
    case BehaviorKind::Explore: return "explore";
    case BehaviorKind::DeployRadio: return "deploy_radio";
    case BehaviorKind::ReturnToComms: return "return_to_comms";
    case BehaviorKind::StuckRecovery: return "stuck_recovery";
    case BehaviorKind::FallRecovery: return "fall_recovery";
    case BehaviorKind::AwaitSupervisor: return "await_supervisor";
  }
  return "unknown";
}

const char* to_string(SupervisorCause c) {
  switch (c) {
    case SupervisorCause::StuckRecoveryFailed: return "stuck_recovery_failed";
    case SupervisorCause::FallRecoveryFailed: return "fall_recovery_failed";
    case SupervisorCause::EndogenousFault: return "endogenous_fault";
  }
  return "unknown";
}

bool stuck_detect(std::span<const SpeedSample> history, double now_s, double window_s,
                  double threshold_mps) {
  if (history.empty()) return false;
  // Cold start: the history must span the whole window.
  if (history.front().t_s > now_s - window_s) return false;
  double sum = 0.0;
  int n = 0;
  for (const auto& s : history) {
    if (s.t_s < now_s - window_s || s.t_s > now_s) continue;
    sum += s.commanded - s.measured;
    ++n;
  }
  if (n == 0) return false;
  return sum / n > threshold_mps;
}

double disk_overlap_fraction(const Vec3& candidate_center, double candidate_radius,
                             const Vec3& other_center, double other_radius) {
  if (!(candidate_radius > 0)) return 0.0;
  const double dx = candidate_center.x - other_center.x;
  const double dy = candidate_center.y - other_center.y;
  const double d = std::sqrt(dx * dx + dy * dy);
  const double r1 = candidate_radius;
  const double r2 = other_radius;
  const double area1 = std::numbers::pi * r1 * r1;
  if (d >= r1 + r2) return 0.0;
  if (d <= std::abs(r1 - r2)) {
    // One disk contains the other.
    const double rmin = std::min(r1, r2);
    return (std::numbers::pi * rmin * rmin) / area1;
  }
  const double a1 = r1 * r1 * std::acos((d * d + r1 * r1 - r2 * r2) / (2.0 * d * r1));
  const double a2 = r2 * r2 * std::acos((d * d + r2 * r2 - r1 * r1) / (2.0 * d * r2));
  const double a3 = 0.5 * std::sqrt((-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2));
  return (a1 + a2 - a3) / area1;
}

bool should_deploy_radio(const Vec3& pose, double robot_tx_power_dbm, const MeshState& mesh,
                         const LinkModel& model, const OccupancyGrid* occupancy,
                         const MissionConfig& config) {
  const auto snr = mesh.bottleneck_from_position(pose, robot_tx_power_dbm, model, occupancy);
  if (snr && *snr >= config.deploy_snr_db) return false;

  // Overlap at exactly the budget is tolerated so a zero budget still
  // permits disjoint-disk deployments.
  const double candidate_radius =
      predict_coverage_radius(robot_tx_power_dbm, model, config.deploy_snr_db);
  for (int idx : mesh.routing_indices()) {
    const RadioNode& r = mesh.all_radios()[idx];
    const double rr = predict_coverage_radius(r.tx_power_dbm, model, config.deploy_snr_db);
    if (disk_overlap_fraction(pose, candidate_radius, r.position, rr) >
        config.overlap_fraction_max) {
      return false;
    }
  }
  return true;
}

DeployOutcome deploy_radio(int& carried_radios, RngStream& rng, double p_jam) {
  if (carried_radios <= 0) return DeployOutcome::Empty;
  --carried_radios;
  return rng.bernoulli(p_jam) ? DeployOutcome::Jammed : DeployOutcome::Deployed;
}

Watchdog::Watchdog(std::vector<std::string> components, const MissionConfig& config)
    : heartbeat_timeout_s_(config.heartbeat_timeout_s),
      restart_latency_s_(config.restart_latency_s), restart_budget_(config.restart_budget) {
  for (auto& name : components) components_.emplace(std::move(name), Component{});
}

void Watchdog::fail_component(const std::string& component, bool persistent) {
  auto it = components_.find(component);
  if (it == components_.end()) return;
  it->second.failed = true;
  it->second.persistent = persistent;
}

Watchdog::Action Watchdog::step(double now_s) {
  Action action;
  for (auto& [name, c] : components_) {
    if (!c.failed) {
      c.last_heartbeat_s = now_s;
      continue;
    }
    if (c.revive_at_s >= 0 && now_s >= c.revive_at_s) {
      // Restart completed. The component heartbeats on boot; persistent
      // faults resurface and must time out again.
      c.revive_at_s = -1.0;
      c.last_heartbeat_s = now_s;
      if (!c.persistent) {
        c.failed = false;
        continue;
      }
    }
    if (c.revive_at_s >= 0) continue;  // restart in progress
    if (now_s - c.last_heartbeat_s <= heartbeat_timeout_s_) continue;
    if (c.restarts_used >= restart_budget_) {
      action.escalate = true;
      continue;
    }
    ++c.restarts_used;
    c.revive_at_s = now_s + restart_latency_s_;
    action.restarted.push_back(name);
  }
  return action;
}

Executive::Executive(int robot_id, Platform platform, MissionConfig config,
                     std::vector<std::string> watchdog_components)
    : robot_id_(robot_id), platform_(platform), config_(config),
      watchdog_(std::move(watchdog_components), config) {}

void Executive::record_speed_sample(double now_s, double commanded, double measured) {
  speed_history_.push_back({now_s, commanded, measured});
  const double horizon = now_s - 4.0 * config_.stuck_window_s;
  std::size_t drop = 0;
  while (drop < speed_history_.size() && speed_history_[drop].t_s < horizon) ++drop;
  if (drop > 0) speed_history_.erase(speed_history_.begin(), speed_history_.begin() + drop);
}

double Executive::time_since_last_connection_s(double now_s) const {
  return now_s - last_connected_s_;
}

bool Executive::stuck_monitor(const ExecutiveContext& ctx) const {
  if (ctx.robot->health == Health::Stuck) return true;
  return stuck_detect(speed_history_, ctx.now_s, config_.stuck_window_s,
                      config_.stuck_threshold_mps);
}

void Executive::transition(BehaviorState next, const ExecutiveContext& ctx,
                           ExecutiveDecision& out) {
  last_event_ = std::string("behavior: ") + to_string(state_.kind) + " -> " +
                to_string(next.kind);
  out.events.push_back({ctx.tick, robot_id_, EventKind::BehaviorChanged,
                        {{"from", to_string(state_.kind)}, {"to", to_string(next.kind)}}});
  state_ = next;
  out.state = state_;
}

ExecutiveDecision Executive::tick(const ExecutiveContext& ctx, RngStream& mission_rng) {
  ExecutiveDecision out;
  out.state = state_;
  const RobotState& robot = *ctx.robot;

  if (ctx.connected) last_connected_s_ = ctx.now_s;

  // Supervisor script first: it can release AwaitSupervisor or abort.
  for (const auto& ev : ctx.supervisor_events) {
    if (ev.robot_id != robot_id_) continue;
    out.events.push_back({ctx.tick, robot_id_, EventKind::SupervisorAction,
                          {{"action", ev.action}, {"params", ev.params}}});
    if (ev.action == "resume") {
      if (state_.kind == BehaviorKind::AwaitSupervisor) {
        out.clear_fault = true;
        out.planner_reset = true;
        transition(BehaviorState{}, ctx, out);
        return out;
      }
    } else if (ev.action == "abort") {
      out.out_of_service = true;
      return out;
    } else if (ev.action == "manual_goal") {
      manual_goal_ = ev.params.value("node", -1);
    } else if (ev.action == "fail_component") {
      watchdog_.fail_component(ev.params.value("component", ""),
                               ev.params.value("persistent", false));
    }
  }

  if (robot.health == Health::OutOfService) return out;

  // Endogenous fault watchdog runs regardless of behavior.
  const auto wd = watchdog_.step(ctx.now_s);
  for (const auto& comp : wd.restarted) {
    out.events.push_back(
        {ctx.tick, robot_id_, EventKind::ComponentRestarted, {{"component", comp}}});
    last_event_ = "restarted " + comp;
  }
  if (wd.escalate && state_.kind != BehaviorKind::AwaitSupervisor) {
    out.events.push_back({ctx.tick, robot_id_, EventKind::SupervisorNotified,
                          {{"cause", to_string(SupervisorCause::EndogenousFault)}}});
    BehaviorState next;
    next.kind = BehaviorKind::AwaitSupervisor;
    next.cause = SupervisorCause::EndogenousFault;
    transition(next, ctx, out);
    return out;
  }

  if (state_.kind == BehaviorKind::AwaitSupervisor) return out;

  // --- fall monitor (highest priority) ---
  if (robot.health == Health::Fallen && state_.kind != BehaviorKind::FallRecovery) {
    if (state_.kind == BehaviorKind::ReturnToComms || state_.kind == BehaviorKind::Explore ||
        state_.kind == BehaviorKind::DeployRadio) {
      resume_after_recovery_ = state_;
    }
    BehaviorState next;
    next.kind = BehaviorKind::FallRecovery;
    next.attempts_used = 0;
    transition(next, ctx, out);
    return out;
  }

  if (state_.kind == BehaviorKind::FallRecovery) {
    if (platform_ != Platform::Legged) {
      throw std::logic_error("fall recovery on a non-legged platform");
    }
    state_.attempts_used++;
    out.events.push_back({ctx.tick, robot_id_, EventKind::RecoveryAttempt,
                          {{"kind", "self_right"}, {"attempt", state_.attempts_used}}});
    if (mission_rng.bernoulli(config_.p_selfright)) {
      // Sit, stand, reset planners, resume what the fall interrupted.
      out.clear_fault = true;
      out.planner_reset = true;
      out.events.push_back(
          {ctx.tick, robot_id_, EventKind::RecoverySucceeded, {{"kind", "self_right"}}});
      BehaviorState next = resume_after_recovery_.value_or(BehaviorState{});
      resume_after_recovery_.reset();
      transition(next, ctx, out);
      return out;
    }
    if (state_.attempts_used >= config_.fall_attempts_n) {
      out.events.push_back({ctx.tick, robot_id_, EventKind::SupervisorNotified,
                            {{"cause", to_string(SupervisorCause::FallRecoveryFailed)}}});
      BehaviorState next;
      next.kind = BehaviorKind::AwaitSupervisor;
      next.cause = SupervisorCause::FallRecoveryFailed;
      transition(next, ctx, out);
    } else {
      out.state = state_;
    }
    return out;
  }

  // --- stuck monitor ---
  if (state_.kind == BehaviorKind::StuckRecovery) {
    const bool window_covered =
        robot.health == Health::Stuck ||
        (!speed_history_.empty() &&
         speed_history_.front().t_s <= ctx.now_s - config_.stuck_window_s);
    if (ctx.now_s >= stage_until_s_ && window_covered) {
      if (state_.stage == 1 && !wiggle_phase_done_) {
        // Wiggle finished; physically stuck robots come free with
        // p_unstick, then a probation window re-arms the detector.
        wiggle_phase_done_ = true;
        if (robot.health == Health::Stuck && mission_rng.bernoulli(config_.p_unstick)) {
          out.clear_fault = true;
        }
        speed_history_.clear();
        stage_until_s_ = ctx.now_s + config_.stuck_window_s;
        out.state = state_;
        return out;
      }
      if (!stuck_monitor(ctx)) {
        out.events.push_back(
            {ctx.tick, robot_id_, EventKind::RecoverySucceeded, {{"kind", "stuck"}}});
        BehaviorState next = resume_after_recovery_.value_or(BehaviorState{});
        resume_after_recovery_.reset();
        transition(next, ctx, out);
        return out;
      }
      if (state_.stage == 0) {
        state_.stage = 1;
        wiggle_phase_done_ = false;
        stage_until_s_ = ctx.now_s + config_.wiggle_duration_s;
        out.wiggle = true;
        out.events.push_back({ctx.tick, robot_id_, EventKind::RecoveryAttempt,
                              {{"kind", "wiggle"}, {"stage", 1}}});
        out.state = state_;
        return out;
      }
      // Both stages exhausted.
      out.events.push_back({ctx.tick, robot_id_, EventKind::SupervisorNotified,
                            {{"cause", to_string(SupervisorCause::StuckRecoveryFailed)}}});
      BehaviorState next;
      next.kind = BehaviorKind::AwaitSupervisor;
      next.cause = SupervisorCause::StuckRecoveryFailed;
      transition(next, ctx, out);
      return out;
    }
    if (state_.stage == 1 && !wiggle_phase_done_) out.wiggle = true;
    out.state = state_;
    return out;
  }
  if (stuck_monitor(ctx)) {
    if (state_.kind == BehaviorKind::ReturnToComms || state_.kind == BehaviorKind::Explore ||
        state_.kind == BehaviorKind::DeployRadio) {
      resume_after_recovery_ = state_;
    }
    BehaviorState next;
    next.kind = BehaviorKind::StuckRecovery;
    next.stage = 0;
    transition(next, ctx, out);
    // Stage 0: reset the planner, try to resume, re-evaluate after a full
    // detector window.
    out.planner_reset = true;
    out.events.push_back({ctx.tick, robot_id_, EventKind::RecoveryAttempt,
                          {{"kind", "planner_reset"}, {"stage", 0}}});
    speed_history_.clear();
    stage_until_s_ = ctx.now_s + config_.stuck_window_s;
    return out;
  }

  // --- comms monitor ---
  const std::int64_t buffer = ctx.net_stats.buffer_size_bytes;
  if (state_.kind == BehaviorKind::ReturnToComms) {
    if (prev_buffer_bytes_ >= 0 && buffer < prev_buffer_bytes_) {
      last_buffer_decrease_s_ = ctx.now_s;
    }
    prev_buffer_bytes_ = buffer;

    // Nominal exploration continues immediately once the buffer drains.
    const bool may_resume = rtc_cause_buffer_ || ctx.connected;
    if (buffer < config_.t_b_low_bytes && may_resume) {
      transition(BehaviorState{}, ctx, out);
      out.planner_reset = true;
      return out;
    }

    const bool at_target = robot.location.at_node() && robot.location.from == state_.target;
    if (at_target && !state_.waiting_since) {
      state_.waiting_since = ctx.tick;
      waiting_since_s_ = ctx.now_s;
      last_buffer_decrease_s_ = ctx.now_s;
      last_event_ = "waiting at comms checkpoint";
    }
    if (state_.waiting_since &&
        ctx.now_s - std::max(waiting_since_s_, last_buffer_decrease_s_) >=
            config_.wait_timeout_s) {
      // Congestion suspected: pick a strong checkpoint strictly closer to
      // base and keep waiting there.
      auto next_target = ctx.irm->nearest_strong_checkpoint(robot_anchor_node(robot), true,
                                                            state_.target);
      const NodeId chosen =
          next_target ? *next_target : ctx.irm->base_node().value_or(state_.target);
      out.events.push_back({ctx.tick, robot_id_, EventKind::Replanned,
                            {{"reason", "comms_retarget"},
                             {"from", state_.target},
                             {"to", chosen}}});
      state_.target = chosen;
      state_.waiting_since.reset();
      last_buffer_decrease_s_ = ctx.now_s;
      last_event_ = "retargeted toward base";
    }
    out.travel_target = state_.target;
    out.state = state_;
    return out;
  }
  const bool disconnected_too_long =
      time_since_last_connection_s(ctx.now_s) > config_.t_disc_s;
  if (buffer >= config_.t_b_high_bytes || disconnected_too_long) {
    rtc_cause_buffer_ = buffer >= config_.t_b_high_bytes;
    auto target = ctx.irm->nearest_strong_checkpoint(robot_anchor_node(robot));
    BehaviorState next;
    next.kind = BehaviorKind::ReturnToComms;
    next.target = target ? *target : ctx.irm->base_node().value_or(robot_anchor_node(robot));
    next.waiting_since.reset();
    last_buffer_decrease_s_ = ctx.now_s;
    prev_buffer_bytes_ = buffer;
    transition(next, ctx, out);
    out.travel_target = next.target;
    return out;
  }

  // --- radio deployment monitor ---
  if (state_.kind == BehaviorKind::DeployRadio) {
    // Another robot may have covered this spot since the decision; skip
    // the now-redundant drop.
    if (ctx.mesh != nullptr && ctx.link_model != nullptr &&
        !should_deploy_radio(ctx.robot_pos, ctx.robot_tx_power_dbm, *ctx.mesh,
                             *ctx.link_model, ctx.occupancy, config_)) {
      transition(BehaviorState{}, ctx, out);
      return out;
    }
    int carried = ctx.carried_radios;
    const DeployOutcome outcome = deploy_radio(carried, mission_rng, config_.p_jam);
    out.deploy_outcome = outcome;
    switch (outcome) {
      case DeployOutcome::Deployed:
        out.events.push_back(
            {ctx.tick, robot_id_, EventKind::RadioDeployed,
             {{"pos", {ctx.robot_pos.x, ctx.robot_pos.y, ctx.robot_pos.z}}}});
        last_event_ = "radio deployed";
        transition(BehaviorState{}, ctx, out);
        return out;
      case DeployOutcome::Jammed:
        out.events.push_back({ctx.tick, robot_id_, EventKind::RadioJammed,
                              {{"remaining", carried}}});
        last_event_ = "radio jammed";
        if (carried <= 0) {
          out.events.push_back({ctx.tick, robot_id_, EventKind::RadioInventoryEmpty, {}});
          transition(BehaviorState{}, ctx, out);
        } else {
          out.state = state_;  // replacement drop next tick
        }
        return out;
      case DeployOutcome::Empty:
        out.events.push_back({ctx.tick, robot_id_, EventKind::RadioInventoryEmpty, {}});
        transition(BehaviorState{}, ctx, out);
        return out;
    }
  }
  if (ctx.carried_radios > 0 && ctx.mesh != nullptr && ctx.link_model != nullptr &&
      should_deploy_radio(ctx.robot_pos, ctx.robot_tx_power_dbm, *ctx.mesh, *ctx.link_model,
                          ctx.occupancy, config_)) {
    BehaviorState next;
    next.kind = BehaviorKind::DeployRadio;
    transition(next, ctx, out);
    return out;
  }

  // --- nominal exploration ---
  if (manual_goal_ && *manual_goal_ >= 0) {
    out.travel_target = manual_goal_;
    if (robot.location.at_node() && robot.location.from == *manual_goal_) {
      manual_goal_.reset();
      out.travel_target.reset();
    }
  }
  out.state = state_;
  return out;
}

MissionHealth Executive::mission_health(const ExecutiveContext& ctx) const {
  MissionHealth h;
  h.behavior = state_.kind;
  h.buffer_size_bytes = ctx.net_stats.buffer_size_bytes;
  h.time_since_last_connection_s = time_since_last_connection_s(ctx.now_s);
  int visited = 0, frontier = 0;
  for (const auto& [id, n] : ctx.irm->nodes()) {
    if (n.kind == IrmNodeKind::Visited || n.kind == IrmNodeKind::Base) ++visited;
    if (n.kind == IrmNodeKind::Frontier) ++frontier;
  }
  h.mission_progress =
      visited + frontier > 0 ? static_cast<double>(visited) / (visited + frontier) : 0.0;
  h.last_event = last_event_;
  return h;
}

}  // namespace mrex
