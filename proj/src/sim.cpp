#include "mrex/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mrex {

namespace {

constexpr double kCoveredThreshold = 0.99;

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

nlohmann::json RunReport::to_json() const {
  nlohmann::json j;
  j["duration_s"] = duration_s;
  j["ticks"] = ticks;
  j["final_coverage"] = final_coverage;
  nlohmann::json cov = nlohmann::json::array();
  for (const auto& [t, c] : coverage_over_time) cov.push_back({t, c});
  j["coverage_over_time"] = cov;
  j["robot_distance_m"] = nlohmann::json::object();
  for (const auto& [id, d] : robot_distance_m) j["robot_distance_m"][std::to_string(id)] = d;
  j["messages"] = {{"enqueued", enqueued_per_class},
                   {"delivered", delivered_per_class},
                   {"dropped", dropped_per_class}};
  j["radios_deployed"] = radios_deployed;
  j["behavior_ticks"] = behavior_ticks;
  j["total_information_gain_bits"] = total_information_gain_bits;
  j["initial_entropy_bits"] = initial_entropy_bits;
  j["final_entropy_bits"] = final_entropy_bits;
  j["event_digest"] = event_digest;
  return j;
}

Simulation::Simulation(Scenario scenario, SimConfig config)
    : scenario_(std::move(scenario)), config_(std::move(config)),
      dt_(scenario_.params.dt_s), duration_s_(scenario_.params.duration_s),
      rngs_(config_.master_seed),
      belief_(scenario_.world.node_count(), scenario_.params.initial_covered_prob) {
  for (const auto& [k, v] : config_.overrides) apply_override(scenario_.params, k, v);
  dt_ = config_.dt_s.value_or(scenario_.params.dt_s);
  duration_s_ = config_.duration_s.value_or(scenario_.params.duration_s);
  if (!(dt_ > 0)) throw ValidationError("sim: dt must be > 0");
  belief_ = CoverageBelief(scenario_.world.node_count(), scenario_.params.initial_covered_prob);
  total_ticks_ = static_cast<std::int64_t>(std::llround(duration_s_ / dt_));

  const NodeId base = scenario_.world.base();
  for (const auto& spec : scenario_.robots) {
    RobotState r;
    r.robot_id = spec.robot_id;
    r.platform = spec.platform;
    r.location = {base, base, 0.0};
    robots_.push_back(r);

    RobotRuntime rt;
    rt.spec = spec;
    rt.carried_radios = spec.carried_radios;
    rt.reporter = std::make_unique<Reporter>(spec.robot_id, scenario_.params.reporter);
    rt.executive =
        std::make_unique<Executive>(spec.robot_id, spec.platform, scenario_.params.mission);
    rt.irm.update_from_traversal(scenario_.world, base);
    runtimes_.push_back(std::move(rt));
    receivers_.emplace(spec.robot_id, std::make_unique<Receiver>());
  }
  std::sort(robots_.begin(), robots_.end(),
            [](const RobotState& a, const RobotState& b) { return a.robot_id < b.robot_id; });
  std::sort(runtimes_.begin(), runtimes_.end(), [](const RobotRuntime& a, const RobotRuntime& b) {
    return a.spec.robot_id < b.spec.robot_id;
  });
  std::sort(scenario_.supervisor_script.begin(), scenario_.supervisor_script.end(),
            [](const SupervisorEvent& a, const SupervisorEvent& b) {
              return a.time_s < b.time_s || (a.time_s == b.time_s && a.robot_id < b.robot_id);
            });

  shared_irm_.update_from_traversal(scenario_.world, base);

  // Base radio id 0 at the base node.
  mesh_radios_.push_back(
      {0, scenario_.world.node(base).position, true, scenario_.base_tx_power_dbm, std::nullopt});
  rebuild_mesh();

  report_.initial_entropy_bits = belief_.entropy_bits();
}

void Simulation::rebuild_mesh() {
  const auto* occ =
      scenario_.world.occupancy() ? &scenario_.world.occupancy().value() : nullptr;
  mesh_ = MeshState::build(mesh_radios_, scenario_.params.link, occ, ++mesh_revision_);
  const std::int64_t stamp = tick_;
  update_checkpoints(shared_irm_, mesh_, scenario_.params.link, occ, stamp);
  for (auto& rt : runtimes_) {
    update_checkpoints(rt.irm, mesh_, scenario_.params.link, occ, stamp);
  }
}

bool Simulation::robot_connected(const RobotState& robot, const RobotSpec& spec) const {
  const auto* occ =
      scenario_.world.occupancy() ? &scenario_.world.occupancy().value() : nullptr;
  const auto snr = mesh_.bottleneck_from_position(
      robot_position(robot, scenario_.world), spec.tx_power_dbm, scenario_.params.link, occ);
  return snr && *snr >= CommsThresholds{}.weak_db;
}

void Simulation::plan_robot(RobotRuntime& rt, RobotState& robot) {
  const ScenarioParams& p = scenario_.params;
  const NodeId anchor =
      robot.location.at_node() ? robot.location.from : robot.location.to;
  const double remaining_budget = std::max(dt_, duration_s_ - now_s());
  const double tour_gamma = p.frontier_greedy_baseline ? 1.0 : p.tour_gamma;

  // Expected observation gain at a node under the current belief.
  auto gain_at = [&](NodeId node) {
    CoverageBelief scratch = belief_;
    const double radius = adaptive_coverage_radius(
        scenario_.world.has_node(node) ? scenario_.world.node(node).clearance : 1.0,
        p.sensor_max_m, p.kappa);
    return scratch.apply_observation(scenario_.world, rt.irm.node(node).position, radius,
                                     p.eps_cov);
  };

  // Targets already covered in passing carry no prize; drop them.
  while (!rt.global_tour.empty() &&
         (!rt.irm.has_node(rt.global_tour.front()) || gain_at(rt.global_tour.front()) < 0.05)) {
    rt.global_tour.erase(rt.global_tour.begin());
  }

  // Global tour: re-solved on its own cadence or when exhausted.
  if (!rt.has_global || rt.global_tour.empty() || now_s() >= rt.next_global_replan_s) {
    TourBuildParams build{remaining_budget, p.local_window_m, p.sensor_max_m, p.kappa,
                           p.eps_cov};
    const TourInstance instance =
        build_tour_instance(rt.irm, scenario_.world, belief_, anchor, build);
    const auto tour = gls_solve(instance, tour_gamma, p.gls_iterations, rngs_.planner());
    rt.global_tour.clear();
    for (int idx : tour) rt.global_tour.push_back(instance.prizes[idx].node);
    rt.has_global = true;
    rt.next_global_replan_s = now_s() + p.global_replan_interval_s;
  }

  // Expand the remaining tour into a concrete policy from the anchor.
  Policy global;
  global.origin = PolicyOrigin::Global;
  global.nodes = {anchor};
  {
    NodeId cur = anchor;
    for (NodeId target : rt.global_tour) {
      const auto seg = rt.irm.shortest_path(cur, target);
      if (seg.size() < 2 && cur != target) continue;  // unreachable from here
      for (std::size_t i = 1; i < seg.size(); ++i) {
        const IrmEdge* e = rt.irm.edge_between(seg[i - 1], seg[i]);
        global.nodes.push_back(seg[i]);
        global.step_time_s.push_back(e->expected_time);
        global.step_gain_bits.push_back(seg[i] == target ? gain_at(target) : 0.0);
      }
      cur = target;
    }
    double t = 0.0;
    for (std::size_t i = 0; i < global.step_time_s.size(); ++i) {
      t += global.step_time_s[i];
      global.utility += std::pow(tour_gamma, t) * global.step_gain_bits[i];
    }
    global.success_prob = policy_success_prob(global, rt.irm);
  }

  // Local rollout policy under global guidance.
  GuidanceParam guidance;
  if (!rt.global_tour.empty()) {
    guidance.target = rt.global_tour.front();
    guidance.target_position = rt.irm.node(guidance.target).position;
    guidance.corridor = global.nodes;
  } else {
    guidance.target = -1;
    guidance.target_position = robot_position(robot, scenario_.world);
  }

  const Irm local_view = rt.irm.extract_local(robot_position(robot, scenario_.world), anchor,
                                              p.local_window_m);
  Policy local = rollout_plan(local_view, scenario_.world, belief_, anchor, guidance,
                              p.rollout, rngs_.planner());

  const Policy& chosen =
      p.frontier_greedy_baseline ? global : meta_select(local, global);
  rt.active_policy = chosen;
  rt.route.assign(chosen.nodes.begin() + 1, chosen.nodes.end());
  rt.steps_since_replan = 0;
  rt.force_replan = false;
  // Nothing worth doing anywhere: back off before asking again.
  rt.next_plan_s = rt.route.empty() ? now_s() + 5.0 : 0.0;

  events_.append({tick_, rt.spec.robot_id, EventKind::Replanned,
                  {{"origin", chosen.origin == PolicyOrigin::Local ? "local" : "global"},
                   {"utility", chosen.utility},
                   {"success_prob", chosen.success_prob},
                   {"steps", chosen.nodes.size() - 1}}});

  nlohmann::json dbg;
  dbg["tick"] = tick_;
  dbg["robot"] = rt.spec.robot_id;
  dbg["chosen"] = chosen.origin == PolicyOrigin::Local ? "local" : "global";
  dbg["local_utility"] = local.utility;
  dbg["local_success"] = local.success_prob;
  dbg["global_utility"] = global.utility;
  dbg["global_success"] = global.success_prob;
  planner_lines_.push_back(dbg.dump());
}

void Simulation::stage_planning() {
  for (std::size_t i = 0; i < runtimes_.size(); ++i) {
    RobotRuntime& rt = runtimes_[i];
    RobotState& robot = robots_[i];
    if (robot.health != Health::Nominal) continue;
    const BehaviorKind kind = rt.executive->state().kind;
    // StuckRecovery stage 0 is a resume attempt: the robot plans and moves
    // again so the detector can re-evaluate on fresh motion.
    if (kind != BehaviorKind::Explore && kind != BehaviorKind::StuckRecovery) continue;
    if (rt.wiggle) continue;
    if (rt.pinned_target) continue;
    if (now_s() < rt.next_plan_s && !rt.force_replan) continue;
    // Receding horizon: execute at most replan_interval steps of a policy.
    const bool due = rt.force_replan || rt.route.empty() ||
                     rt.steps_since_replan >= scenario_.params.reward.replan_interval;
    if (due) plan_robot(rt, robot);
  }
}

void Simulation::stage_mission() {
  const auto* occ =
      scenario_.world.occupancy() ? &scenario_.world.occupancy().value() : nullptr;

  // Supervisor events due this tick.
  due_supervisor_events_.clear();
  while (supervisor_cursor_ < scenario_.supervisor_script.size() &&
         scenario_.supervisor_script[supervisor_cursor_].time_s <= now_s() + 1e-9) {
    due_supervisor_events_.push_back(scenario_.supervisor_script[supervisor_cursor_]);
    ++supervisor_cursor_;
  }

  for (std::size_t i = 0; i < runtimes_.size(); ++i) {
    RobotRuntime& rt = runtimes_[i];
    RobotState& robot = robots_[i];
    if (robot.health == Health::OutOfService) continue;

    ExecutiveContext ctx;
    ctx.robot = &robot;
    ctx.robot_pos = robot_position(robot, scenario_.world);
    ctx.robot_tx_power_dbm = rt.spec.tx_power_dbm;
    ctx.net_stats = rt.reporter->stats(now_s());
    ctx.irm = &rt.irm;
    ctx.mesh = &mesh_;
    ctx.link_model = &scenario_.params.link;
    ctx.occupancy = occ;
    ctx.carried_radios = rt.carried_radios;
    ctx.connected = robot_connected(robot, rt.spec);
    ctx.now_s = now_s();
    ctx.tick = tick_;
    ctx.supervisor_events = due_supervisor_events_;

    ExecutiveDecision d = rt.executive->tick(ctx, rngs_.mission());
    events_.append(std::move(d.events));

    if (d.out_of_service) {
      robot.health = Health::OutOfService;
      rt.route.clear();
      rt.pinned_target.reset();
      continue;
    }
    if (d.clear_fault) clear_fault(robot);
    if (d.planner_reset) {
      rt.route.clear();
      rt.force_replan = true;
      rt.has_global = false;
    }
    rt.wiggle = d.wiggle;
    if (d.deploy_outcome) {
      if (*d.deploy_outcome == DeployOutcome::Deployed ||
          *d.deploy_outcome == DeployOutcome::Jammed) {
        rt.carried_radios = std::max(0, rt.carried_radios - 1);
      }
      if (*d.deploy_outcome == DeployOutcome::Deployed) {
        mesh_radios_.push_back({next_radio_id_++, robot_position(robot, scenario_.world), false,
                                rt.spec.tx_power_dbm, std::nullopt});
        report_.radios_deployed++;
        // Rebuild immediately so later robots this tick see the new relay
        // and skip redundant drops.
        rebuild_mesh();
      }
    }
    const auto state = rt.executive->state();
    if (d.travel_target) {
      if (rt.pinned_target != d.travel_target) {
        rt.pinned_target = d.travel_target;
        rt.route.clear();
      }
    } else if (state.kind == BehaviorKind::Explore && rt.pinned_target) {
      rt.pinned_target.reset();
      rt.route.clear();
      rt.force_replan = true;
    }
    if (state.kind == BehaviorKind::FallRecovery || state.kind == BehaviorKind::DeployRadio ||
        state.kind == BehaviorKind::AwaitSupervisor) {
      rt.route.clear();
    }
  }

}

std::optional<MoveCommand> Simulation::command_for(RobotRuntime& rt, RobotState& robot) {
  if (robot.health != Health::Nominal) return std::nullopt;
  const auto& state = rt.executive->state();
  if (state.kind == BehaviorKind::AwaitSupervisor || state.kind == BehaviorKind::FallRecovery ||
      state.kind == BehaviorKind::DeployRadio) {
    return std::nullopt;
  }

  if (rt.wiggle) {
    // Alternate short forward/back pushes along the current edge.
    NodeId toward;
    if (robot.location.at_node()) {
      const auto nbrs = scenario_.world.neighbors(robot.location.from);
      if (nbrs.empty()) return std::nullopt;
      toward = nbrs.front().first;
    } else {
      toward = (tick_ % 2 == 0) ? robot.location.to : robot.location.from;
    }
    return MoveCommand{robot.robot_id, toward, 0.3};
  }

  const NodeId origin = robot.location.at_node() ? robot.location.from : robot.location.to;

  if (rt.pinned_target) {
    if (robot.location.at_node() && robot.location.from == *rt.pinned_target) {
      return std::nullopt;
    }
    if (rt.route.empty() || rt.route.back() != *rt.pinned_target) {
      auto path = rt.irm.shortest_path(origin, *rt.pinned_target);
      rt.route.assign(path.begin() + (path.empty() ? 0 : 1), path.end());
    }
  }

  if (!robot.location.at_node()) {
    const WorldEdge* e = scenario_.world.edge_between(robot.location.from, robot.location.to);
    return MoveCommand{robot.robot_id, robot.location.to, e->nominal_speed};
  }
  while (!rt.route.empty() && rt.route.front() == robot.location.from) {
    rt.route.erase(rt.route.begin());
  }
  if (rt.route.empty()) return std::nullopt;
  const NodeId next = rt.route.front();
  const WorldEdge* e = scenario_.world.edge_between(robot.location.from, next);
  if (e == nullptr) {
    rt.route.clear();
    rt.force_replan = true;
    return std::nullopt;
  }
  return MoveCommand{robot.robot_id, next, e->nominal_speed};
}

void Simulation::stage_world() {
  pending_commands_.clear();
  commanded_speed_this_tick_.clear();
  for (std::size_t i = 0; i < runtimes_.size(); ++i) {
    const auto cmd = command_for(runtimes_[i], robots_[i]);
    if (cmd) {
      pending_commands_.push_back(*cmd);
      commanded_speed_this_tick_[cmd->robot_id] = cmd->speed;
    }
  }
  StepParams sp;
  sp.slip_max = scenario_.params.slip_max;
  sp.slip_max_wheeled = scenario_.params.slip_max_wheeled;
  sp.slip_max_legged = scenario_.params.slip_max_legged;
  sp.slip_max_aerial = scenario_.params.slip_max_aerial;
  auto evs = step(scenario_.world, robots_, pending_commands_, dt_, tick_, rngs_.world(), sp);
  events_.append(std::move(evs));

  for (std::size_t i = 0; i < runtimes_.size(); ++i) {
    RobotRuntime& rt = runtimes_[i];
    RobotState& robot = robots_[i];
    const double commanded = commanded_speed_this_tick_.count(robot.robot_id)
                                 ? commanded_speed_this_tick_[robot.robot_id]
                                 : 0.0;
    const double measured = commanded > 0 ? robot.measured_speed : 0.0;
    rt.executive->record_speed_sample(now_s(), commanded, measured);

    // Consume the route as nodes are reached.
    if (robot.location.at_node() && !rt.route.empty() &&
        rt.route.front() == robot.location.from) {
      rt.route.erase(rt.route.begin());
      rt.steps_since_replan++;
      if (rt.pinned_target && robot.location.from == *rt.pinned_target) {
        rt.pinned_target.reset();
      }
    }
  }
}

void Simulation::stage_irm() {
  const auto* occ =
      scenario_.world.occupancy() ? &scenario_.world.occupancy().value() : nullptr;
  for (std::size_t i = 0; i < runtimes_.size(); ++i) {
    RobotRuntime& rt = runtimes_[i];
    RobotState& robot = robots_[i];
    if (robot.health == Health::OutOfService) continue;

    if (robot.location.at_node()) {
      const int changes = rt.irm.update_from_traversal(scenario_.world, robot.location.from);
      if (changes > 0) {
        Message m;
        m.topic = "map";
        m.cls = TrafficClass::Key;
        m.size_bytes = scenario_.params.map_scan_bytes;
        m.seq = rt.reporter->next_seq("map");
        m.created_tick = tick_;
        rt.reporter->enqueue(std::move(m), tick_);
        report_.enqueued_per_class["key"]++;
      }
      // Every visited node doubles as a comms checkpoint.
      const auto snr = mesh_.bottleneck_from_position(
          scenario_.world.node(robot.location.from).position, rt.spec.tx_power_dbm,
          scenario_.params.link, occ);
      const double snr_db = snr ? *snr : -std::numeric_limits<double>::infinity();
      rt.irm.annotate_checkpoint(robot.location.from, snr_db, classify_checkpoint(snr_db),
                                 tick_);
    }

    // Observation from wherever the robot ended the tick.
    const Vec3 pose = robot_position(robot, scenario_.world);
    const NodeId anchor = robot_anchor_node(robot);
    const double radius = adaptive_coverage_radius(scenario_.world.node(anchor).clearance,
                                                   scenario_.params.sensor_max_m,
                                                   scenario_.params.kappa);
    const double gain =
        belief_.apply_observation(scenario_.world, pose, radius, scenario_.params.eps_cov);
    report_.total_information_gain_bits += gain;
  }

  // Connected robots sync through the shared IRM at the tick boundary.
  for (std::size_t i = 0; i < runtimes_.size(); ++i) {
    RobotRuntime& rt = runtimes_[i];
    if (robots_[i].health == Health::OutOfService) continue;
    if (!robot_connected(robots_[i], rt.spec)) continue;
    const std::uint64_t floor =
        std::max(shared_irm_.revision(), rt.irm.revision());
    Irm merged = Irm::merge(shared_irm_, rt.irm);
    merged.ensure_revision_at_least(floor + 1);
    shared_irm_ = merged;
    rt.irm = std::move(merged);
  }
}

void Simulation::stage_netstack() {
  const auto* occ =
      scenario_.world.occupancy() ? &scenario_.world.occupancy().value() : nullptr;
  const ScenarioParams& p = scenario_.params;

  // Periodic traffic.
  for (std::size_t i = 0; i < runtimes_.size(); ++i) {
    RobotRuntime& rt = runtimes_[i];
    if (robots_[i].health == Health::OutOfService) continue;
    if (now_s() >= rt.next_pose_s) {
      Message m;
      m.topic = "pose";
      m.cls = TrafficClass::TimeSensitive;
      m.size_bytes = p.pose_bytes;
      m.seq = rt.reporter->next_seq("pose");
      m.created_tick = tick_;
      rt.reporter->enqueue(std::move(m), tick_);
      report_.enqueued_per_class["time_sensitive"]++;
      rt.next_pose_s = now_s() + p.pose_period_s;
    }
    if (now_s() >= rt.next_health_s) {
      Message m;
      m.topic = "health";
      m.cls = TrafficClass::MissionCritical;
      m.size_bytes = p.health_bytes;
      m.seq = rt.reporter->next_seq("health");
      m.created_tick = tick_;
      rt.reporter->enqueue(std::move(m), tick_);
      report_.enqueued_per_class["mission_critical"]++;
      rt.next_health_s = now_s() + p.mission.health_period_s;
    }
  }

  // Fair share: robots attached to the same first-hop radio split it.
  std::map<int, int> first_hop_count;
  std::vector<std::optional<double>> snrs(runtimes_.size());
  std::vector<int> hops(runtimes_.size(), -1);
  for (std::size_t i = 0; i < runtimes_.size(); ++i) {
    if (robots_[i].health == Health::OutOfService) continue;
    int hop = -1;
    snrs[i] = mesh_.bottleneck_from_position(robot_position(robots_[i], scenario_.world),
                                             runtimes_[i].spec.tx_power_dbm, p.link, occ, &hop);
    hops[i] = hop;
    if (snrs[i]) first_hop_count[hop]++;
  }

  for (std::size_t i = 0; i < runtimes_.size(); ++i) {
    RobotRuntime& rt = runtimes_[i];
    if (robots_[i].health == Health::OutOfService) continue;
    const bool link_up = snrs[i].has_value();
    double budget = 0.0;
    if (link_up) {
      const int share = std::max(1, first_hop_count[hops[i]]);
      budget = capacity_bps(*snrs[i], p.link.bandwidth_hz) * dt_ / 8.0 / share;
    }
    auto frames = rt.reporter->transmit_step(budget, link_up, dt_, now_s(), tick_);
    for (auto& ev : rt.reporter->take_events()) {
      if (ev.kind == EventKind::MessageDropped) report_.dropped_per_class["time_sensitive"]++;
      events_.append(std::move(ev));
    }

    Receiver& rx = *receivers_.at(rt.spec.robot_id);
    for (const Frame& f : frames) {
      const bool lost = p.frame_loss_rate > 0 && rngs_.netloss().bernoulli(p.frame_loss_rate);
      if (lost) {
        if (f.cls == TrafficClass::TimeSensitive) {
          report_.dropped_per_class["time_sensitive"]++;
          events_.append({tick_, rt.spec.robot_id, EventKind::MessageDropped,
                          {{"topic", f.topic}, {"seq", f.seq}, {"reason", "channel_loss"}}});
        }
        continue;
      }
      for (const Frame& d : rx.accept(f)) {
        report_.delivered_per_class[to_string(d.cls)]++;
        nlohmann::json line = {{"tick", tick_},
                               {"robot", d.src_robot},
                               {"topic", d.topic},
                               {"seq", d.seq},
                               {"bytes", d.size_bytes}};
        delivery_lines_.push_back(line.dump());
        events_.append({tick_, rt.spec.robot_id, EventKind::MessageDelivered,
                        {{"topic", d.topic}, {"seq", d.seq}, {"bytes", d.size_bytes}}});
      }
    }
    // Cumulative ACKs ride back on the same tick when the link is up.
    if (link_up) {
      for (const auto& topic : rt.reporter->topics()) {
        if (rt.reporter->topic_class(topic) == TrafficClass::TimeSensitive) continue;
        rt.reporter->ack(topic, rx.cumulative_ack(topic), now_s());
      }
    }
  }
}

void Simulation::stage_metrics() {
  double covered = 0;
  for (std::size_t i = 0; i < belief_.size(); ++i) {
    if (belief_.covered_prob(i) >= kCoveredThreshold) covered += 1.0;
  }
  const double fraction = covered / static_cast<double>(belief_.size());
  report_.coverage_over_time.emplace_back(now_s(), fraction);
  report_.final_coverage = fraction;

  for (std::size_t i = 0; i < runtimes_.size(); ++i) {
    report_.behavior_ticks[to_string(runtimes_[i].executive->state().kind)]++;
    report_.robot_distance_m[robots_[i].robot_id] = robots_[i].odometer;
  }

  std::ostringstream row;
  row << fmt_double(now_s()) << ',' << fmt_double(fraction);
  std::int64_t buffered = 0;
  for (const auto& rt : runtimes_) buffered += rt.reporter->buffer_size_bytes();
  row << ',' << buffered << ',' << report_.radios_deployed;
  metrics_rows_.push_back(row.str());
}

bool Simulation::step_once() {
  if (tick_ >= total_ticks_) return false;
  stage_planning();
  stage_mission();
  stage_world();
  stage_irm();
  stage_netstack();
  stage_metrics();
  ++tick_;
  return true;
}

bool Simulation::conservation_holds() const {
  // enqueued == delivered + queued + in-flight + dropped per class, with
  // queued/in-flight counted above the receiver's delivery cursor.
  std::map<std::string, std::int64_t> queued, in_flight;
  for (std::size_t i = 0; i < runtimes_.size(); ++i) {
    const RobotRuntime& rt = runtimes_[i];
    const Receiver& rx = *receivers_.at(rt.spec.robot_id);
    for (const auto& topic : rt.reporter->topics()) {
      const TrafficClass cls = rt.reporter->topic_class(topic);
      const std::uint64_t cum =
          cls == TrafficClass::TimeSensitive ? 0 : rx.cumulative_ack(topic);
      queued[to_string(cls)] += rt.reporter->count_unsent_above(topic, cum);
      in_flight[to_string(cls)] += rt.reporter->count_unacked_above(topic, cum);
    }
  }
  for (const char* cls : {"key", "mission_critical", "time_sensitive"}) {
    const std::int64_t enq =
        report_.enqueued_per_class.count(cls) ? report_.enqueued_per_class.at(cls) : 0;
    const std::int64_t del =
        report_.delivered_per_class.count(cls) ? report_.delivered_per_class.at(cls) : 0;
    const std::int64_t drop =
        report_.dropped_per_class.count(cls) ? report_.dropped_per_class.at(cls) : 0;
    const std::int64_t q = queued.count(cls) ? queued.at(cls) : 0;
    const std::int64_t fl = in_flight.count(cls) ? in_flight.at(cls) : 0;
    if (enq != del + drop + q + fl) return false;
  }
  return true;
}

RunReport Simulation::run() {
  while (step_once()) {
  }
  report_.duration_s = duration_s_;
  report_.ticks = total_ticks_;
  report_.final_entropy_bits = belief_.entropy_bits();
  report_.event_digest = events_.digest();
  if (!config_.out_dir.empty()) write_outputs(report_);
  return report_;
}

void Simulation::write_outputs(const RunReport& report) const {
  namespace fs = std::filesystem;
  fs::create_directories(config_.out_dir);

  {
    std::ofstream out(config_.out_dir / "report.json");
    out << report.to_json().dump(2) << '\n';
  }
  {
    std::ofstream out(config_.out_dir / "events.jsonl");
    nlohmann::json header;
    header["scenario"] = scenario_.source_path;
    header["scenario_digest"] = scenario_.content_digest;
    header["seed"] = config_.master_seed;
    header["dt_s"] = dt_;
    header["duration_s"] = duration_s_;
    nlohmann::json ov = nlohmann::json::array();
    for (const auto& [k, v] : config_.overrides) ov.push_back(k + "=" + v);
    header["overrides"] = ov;
    out << header.dump() << '\n';
    for (const auto& ev : events_.events()) out << to_jsonl(ev) << '\n';
  }
  {
    std::ofstream out(config_.out_dir / "delivery.jsonl");
    for (const auto& line : delivery_lines_) out << line << '\n';
  }
  {
    std::ofstream out(config_.out_dir / "metrics.csv");
    out << "t_s,coverage_fraction,buffered_bytes,radios_deployed\n";
    for (const auto& row : metrics_rows_) out << row << '\n';
  }
  {
    std::ofstream out(config_.out_dir / "planner.jsonl");
    for (const auto& line : planner_lines_) out << line << '\n';
  }
}

ReplayVerdict replay_check(const std::filesystem::path& event_log_path,
                           std::optional<std::filesystem::path> scenario_override) {
  ReplayVerdict verdict;
  std::ifstream in(event_log_path);
  if (!in) {
    verdict.detail = "cannot open log " + event_log_path.string();
    return verdict;
  }
  std::string header_line;
  if (!std::getline(in, header_line)) {
    verdict.detail = "empty log";
    return verdict;
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::parse_error& e) {
    verdict.detail = std::string("corrupt header: ") + e.what();
    return verdict;
  }

  SimConfig config;
  config.master_seed = header.value("seed", static_cast<std::uint64_t>(1));
  config.dt_s = header.value("dt_s", 0.5);
  config.duration_s = header.value("duration_s", 0.0);
  for (const auto& ov : header.value("overrides", nlohmann::json::array())) {
    const std::string s = ov.get<std::string>();
    const auto eq = s.find('=');
    if (eq != std::string::npos) config.overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }

  const std::filesystem::path scenario_path =
      scenario_override.value_or(std::filesystem::path(header.value("scenario", "")));
  Scenario scenario = load_scenario(scenario_path);

  Simulation sim(std::move(scenario), config);
  sim.run();

  std::size_t idx = 0;
  std::string line;
  const auto& events = sim.event_log().events();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json logged;
    try {
      logged = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      verdict.detail = std::string("corrupt event line: ") + e.what();
      verdict.first_divergent_tick = idx < events.size() ? events[idx].tick : -1;
      return verdict;
    }
    if (idx >= events.size() || to_jsonl(events[idx]) != line) {
      // Report where the re-executed run diverges from the log.
      verdict.first_divergent_tick = idx < events.size() ? events[idx].tick : -1;
      verdict.detail = "event mismatch at index " + std::to_string(idx);
      return verdict;
    }
    ++idx;
  }
  if (idx != events.size()) {
    verdict.first_divergent_tick = events[idx].tick;
    verdict.detail = "log truncated";
    return verdict;
  }
  verdict.ok = true;
  return verdict;
}

}  // namespace mrex
