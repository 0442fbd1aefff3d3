#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mrex/mission.hpp"
#include "support/oracles.hpp"
#include "support/testutil.hpp"

using namespace mrex;

namespace {

// Line corridor 0..4 at 10 m spacing, fully explored, base radio only.
struct MissionFixture {
  WorldGraph world = testutil::line_world(5, 10.0);
  Irm irm = testutil::fully_explored_irm(world);
  LinkModel link;
  MeshState mesh;
  RobotState robot;
  MissionConfig config;
  RngStream rng{99};

  MissionFixture() {
    mesh = MeshState::build({{0, {0, 0, 0}, true, 20.0, std::nullopt}}, link, nullptr, 1);
    robot.robot_id = 1;
    robot.platform = Platform::Legged;
    robot.location = {4, 4, 0.0};
    config.t_b_high_bytes = 1000;
    config.t_b_low_bytes = 200;
    config.wait_timeout_s = 60.0;
    config.stuck_window_s = 5.0;
    config.stuck_threshold_mps = 0.3;
    config.wiggle_duration_s = 4.0;
  }

  ExecutiveContext ctx(Executive& exec, std::int64_t tick, double now_s,
                       std::int64_t buffer_bytes, bool connected = true) {
    (void)exec;
    ExecutiveContext c;
    c.robot = &robot;
    c.robot_pos = robot_position(robot, world);
    c.robot_tx_power_dbm = 20.0;
    c.net_stats.buffer_size_bytes = buffer_bytes;
    c.irm = &irm;
    c.mesh = &mesh;
    c.link_model = &link;
    c.occupancy = nullptr;
    c.carried_radios = 0;
    c.connected = connected;
    c.now_s = now_s;
    c.tick = tick;
    return c;
  }
};

}  // namespace

TEST_CASE("stuck_detect") {
  SUBCASE("no discrepancy stays quiet") {
    std::vector<SpeedSample> h;
    for (int t = 0; t <= 10; ++t) h.push_back({t * 1.0, 1.0, 1.0});
    CHECK_FALSE(stuck_detect(h, 10.0, 5.0, 0.3));
  }
  SUBCASE("full discrepancy over the window fires") {
    std::vector<SpeedSample> h;
    for (int t = 0; t <= 10; ++t) h.push_back({t * 1.0, 1.0, 0.0});
    CHECK(stuck_detect(h, 10.0, 5.0, 0.5));
  }
  SUBCASE("cold start below window coverage is false") {
    std::vector<SpeedSample> h{{9.0, 1.0, 0.0}, {10.0, 1.0, 0.0}};
    CHECK_FALSE(stuck_detect(h, 10.0, 5.0, 0.3));
  }
  SUBCASE("sawtooth trace matches the recount oracle at every tick") {
    std::vector<SpeedSample> h;
    for (int t = 0; t <= 200; ++t) {
      const double measured = (t % 7 < 3) ? 0.1 : 0.9;
      h.push_back({t * 0.5, 1.0, measured});
      const double now = t * 0.5;
      CHECK(stuck_detect(h, now, 5.0, 0.3) == oracles::recount_stuck(h, now, 5.0, 0.3));
    }
  }
}

TEST_CASE("disk overlap fraction") {
  SUBCASE("disjoint disks") {
    CHECK(disk_overlap_fraction({0, 0, 0}, 5, {20, 0, 0}, 5) == 0.0);
  }
  SUBCASE("identical disks overlap fully") {
    CHECK(disk_overlap_fraction({0, 0, 0}, 5, {0, 0, 0}, 5) == doctest::Approx(1.0));
  }
  SUBCASE("containment of a larger disk") {
    CHECK(disk_overlap_fraction({0, 0, 0}, 2, {1, 0, 0}, 50) == doctest::Approx(1.0));
  }
  SUBCASE("half-overlapping matches the sampled lens area") {
    const double closed = disk_overlap_fraction({0, 0, 0}, 10, {10, 0, 0}, 10);
    const double sampled = oracles::sampled_overlap_fraction({0, 0, 0}, 10, {10, 0, 0}, 10);
    CHECK(closed == doctest::Approx(sampled).epsilon(0.01));
    CHECK(closed == doctest::Approx(0.39100221895577053).epsilon(1e-9));
  }
}

TEST_CASE("should_deploy_radio") {
  MissionFixture fx;
  SUBCASE("strong snr at pose suppresses deployment") {
    CHECK_FALSE(should_deploy_radio({5, 0, 0}, 20.0, fx.mesh, fx.link, nullptr, fx.config));
  }
  SUBCASE("weak snr far from existing radios deploys") {
    // 2 km out: below the 20 dB threshold and ~zero overlap.
    CHECK(should_deploy_radio({2000, 0, 0}, 20.0, fx.mesh, fx.link, nullptr, fx.config));
  }
  SUBCASE("half-inside candidate blocked at overlap_max 0.25") {
    MissionConfig cfg = fx.config;
    cfg.overlap_fraction_max = 0.25;
    const double r = predict_coverage_radius(20.0, fx.link, cfg.deploy_snr_db);
    // Candidate centered one radius away: lens fraction ~0.391 >= 0.25.
    const Vec3 pose{r, 0, 0};
    CHECK(disk_overlap_fraction(pose, r, {0, 0, 0}, r) > 0.25);
    CHECK_FALSE(should_deploy_radio(pose, 20.0, fx.mesh, fx.link, nullptr, cfg));
  }
}

TEST_CASE("deploy_radio outcomes") {
  SUBCASE("p_jam 0 always deploys") {
    RngStream rng(1);
    int carried = 5;
    for (int i = 0; i < 5; ++i) {
      CHECK(deploy_radio(carried, rng, 0.0) == DeployOutcome::Deployed);
    }
    CHECK(carried == 0);
    CHECK(deploy_radio(carried, rng, 0.0) == DeployOutcome::Empty);
  }
  SUBCASE("jam frequency matches p_jam") {
    RngStream rng(777);
    int jams = 0;
    for (int i = 0; i < 1000; ++i) {
      int carried = 1;
      if (deploy_radio(carried, rng, 0.3) == DeployOutcome::Jammed) ++jams;
    }
    CHECK(std::abs(jams / 1000.0 - 0.3) < 0.03);
  }
}

TEST_CASE("executive: nominal robot with small buffer stays exploring") {
  MissionFixture fx;
  Executive exec(1, Platform::Legged, fx.config);
  for (int t = 0; t < 10; ++t) {
    const auto d = exec.tick(fx.ctx(exec, t, t * 1.0, 100), fx.rng);
    CHECK(d.state.kind == BehaviorKind::Explore);
  }
}

TEST_CASE("executive: fallen robot preempts everything") {
  MissionFixture fx;
  Executive exec(1, Platform::Legged, fx.config);
  fx.robot.health = Health::Fallen;
  // Buffer also over threshold: fall still wins.
  const auto d = exec.tick(fx.ctx(exec, 0, 0.0, 5000), fx.rng);
  CHECK(d.state.kind == BehaviorKind::FallRecovery);
}

TEST_CASE("executive: fall handled first, return-to-comms afterward (oracle trace)") {
  MissionFixture fx;
  fx.config.p_selfright = 1.0;
  Executive exec(1, Platform::Legged, fx.config);

  // Hand-simulated expectation:
  // t0: nominal, small buffer -> Explore
  // t1: fallen (buffer high)  -> FallRecovery (transition)
  // t2: attempt succeeds      -> back to Explore (restored), fault cleared
  // t3: buffer still high     -> ReturnToComms
  auto d0 = exec.tick(fx.ctx(exec, 0, 0.0, 100), fx.rng);
  CHECK(d0.state.kind == BehaviorKind::Explore);

  fx.robot.health = Health::Fallen;
  auto d1 = exec.tick(fx.ctx(exec, 1, 1.0, 5000), fx.rng);
  CHECK(d1.state.kind == BehaviorKind::FallRecovery);

  auto d2 = exec.tick(fx.ctx(exec, 2, 2.0, 5000), fx.rng);
  CHECK(d2.clear_fault);
  CHECK(d2.state.kind == BehaviorKind::Explore);
  fx.robot.health = Health::Nominal;

  auto d3 = exec.tick(fx.ctx(exec, 3, 3.0, 5000), fx.rng);
  CHECK(d3.state.kind == BehaviorKind::ReturnToComms);
}

TEST_CASE("fall recovery: p_selfright 0 exhausts n attempts then escalates") {
  MissionFixture fx;
  fx.config.p_selfright = 0.0;
  fx.config.fall_attempts_n = 3;
  Executive exec(1, Platform::Legged, fx.config);
  fx.robot.health = Health::Fallen;

  auto enter = exec.tick(fx.ctx(exec, 0, 0.0, 0), fx.rng);
  CHECK(enter.state.kind == BehaviorKind::FallRecovery);

  int attempts = 0;
  bool notified = false;
  for (int t = 1; t <= 5; ++t) {
    const auto d = exec.tick(fx.ctx(exec, t, t * 1.0, 0), fx.rng);
    for (const auto& ev : d.events) {
      if (ev.kind == EventKind::RecoveryAttempt) ++attempts;
      if (ev.kind == EventKind::SupervisorNotified) notified = true;
    }
    if (d.state.kind == BehaviorKind::AwaitSupervisor) {
      CHECK(d.state.cause == SupervisorCause::FallRecoveryFailed);
      break;
    }
  }
  CHECK(attempts == 3);
  CHECK(notified);
  CHECK(exec.state().kind == BehaviorKind::AwaitSupervisor);

  SUBCASE("supervisor resume releases the robot") {
    std::vector<SupervisorEvent> script{{6.0, 1, "resume", {}}};
    auto c = fx.ctx(exec, 6, 6.0, 0);
    c.supervisor_events = script;
    const auto d = exec.tick(c, fx.rng);
    CHECK(d.state.kind == BehaviorKind::Explore);
    CHECK(d.clear_fault);
  }
}

TEST_CASE("fall recovery statistics match 1-(1-p)^n") {
  for (const double p : {0.5, 0.7}) {
    RngStream rng(static_cast<std::uint64_t>(p * 1000));
    int recovered = 0;
    const int trials = 10000;
    for (int i = 0; i < trials; ++i) {
      MissionFixture fx;
      fx.config.p_selfright = p;
      fx.config.fall_attempts_n = 3;
      Executive exec(1, Platform::Legged, fx.config);
      fx.robot.health = Health::Fallen;
      exec.tick(fx.ctx(exec, 0, 0.0, 0), rng);  // enter
      for (int t = 1; t <= 3; ++t) {
        const auto d = exec.tick(fx.ctx(exec, t, t * 1.0, 0), rng);
        if (d.clear_fault) {
          ++recovered;
          break;
        }
        if (d.state.kind == BehaviorKind::AwaitSupervisor) break;
      }
    }
    const double expected = 1.0 - std::pow(1.0 - p, 3);
    CHECK(std::abs(recovered / static_cast<double>(trials) - expected) < 0.01);
  }
}

TEST_CASE("fall recovery on wheeled platform is a contract violation") {
  MissionFixture fx;
  Executive exec(1, Platform::Wheeled, fx.config);
  fx.robot.platform = Platform::Wheeled;
  fx.robot.health = Health::Fallen;
  exec.tick(fx.ctx(exec, 0, 0.0, 0), fx.rng);  // transition in
  CHECK_THROWS_AS(exec.tick(fx.ctx(exec, 1, 1.0, 0), fx.rng), std::logic_error);
}

TEST_CASE("return to comms: thresholds and retarget, tick-for-tick oracle") {
  MissionFixture fx;
  fx.irm.annotate_checkpoint(0, 30.0, CommsClass::Strong, 0);  // base
  fx.irm.annotate_checkpoint(2, 25.0, CommsClass::Strong, 0);  // mid corridor
  fx.irm.annotate_checkpoint(3, 22.0, CommsClass::Strong, 0);  // near robot at 4
  Executive exec(1, Platform::Legged, fx.config);

  // (a) entry exactly when buffer >= T_B_high
  auto d = exec.tick(fx.ctx(exec, 0, 0.0, 999), fx.rng);
  CHECK(d.state.kind == BehaviorKind::Explore);
  d = exec.tick(fx.ctx(exec, 1, 1.0, 1000), fx.rng);
  CHECK(d.state.kind == BehaviorKind::ReturnToComms);
  CHECK(d.state.target == 3);  // nearest strong checkpoint
  REQUIRE(d.travel_target.has_value());
  CHECK(*d.travel_target == 3);

  SUBCASE("(b) buffer below T_B_low resumes exploration immediately") {
    d = exec.tick(fx.ctx(exec, 2, 2.0, 199), fx.rng);
    CHECK(d.state.kind == BehaviorKind::Explore);
  }

  SUBCASE("(c) frozen buffer at the target retargets after exactly 60 s") {
    // Robot reaches node 3 at t=11.
    for (int t = 2; t <= 10; ++t) {
      d = exec.tick(fx.ctx(exec, t, t * 1.0, 900), fx.rng);
      CHECK(d.state.kind == BehaviorKind::ReturnToComms);
      CHECK(d.state.target == 3);
    }
    fx.robot.location = {3, 3, 0.0};
    // Arrival tick: waiting begins.
    d = exec.tick(fx.ctx(exec, 11, 11.0, 900), fx.rng);
    CHECK(d.state.waiting_since.has_value());
    // Buffer never decreases; hand-simulated oracle: the retarget fires at
    // the first tick with now - arrival >= 60, i.e. t = 71.
    for (int t = 12; t <= 70; ++t) {
      d = exec.tick(fx.ctx(exec, t, t * 1.0, 900), fx.rng);
      CHECK(d.state.target == 3);
    }
    d = exec.tick(fx.ctx(exec, 71, 71.0, 900), fx.rng);
    CHECK(d.state.target == 2);  // strictly closer to base than 3
    bool saw_retarget = false;
    for (const auto& ev : d.events) {
      if (ev.kind == EventKind::Replanned) saw_retarget = true;
    }
    CHECK(saw_retarget);

    // A buffer decrease resets the stall clock.
    fx.robot.location = {2, 2, 0.0};
    d = exec.tick(fx.ctx(exec, 72, 72.0, 900), fx.rng);  // arrive at 2
    CHECK(d.state.waiting_since.has_value());
    // Strict decrease at t=80 restarts the 60 s clock; the next retarget
    // fires at t=140 exactly.
    for (int t = 73; t <= 139; ++t) {
      const std::int64_t buf = t < 80 ? 850 : 840;
      d = exec.tick(fx.ctx(exec, t, t * 1.0, buf), fx.rng);
      CHECK(d.state.target == 2);
    }
    d = exec.tick(fx.ctx(exec, 140, 140.0, 840), fx.rng);
    CHECK(d.state.target == 0);  // base is the only strictly-closer option
  }

  SUBCASE("no strong checkpoint anywhere targets base") {
    Irm bare = testutil::fully_explored_irm(fx.world);
    Executive e2(2, Platform::Legged, fx.config);
    auto c = fx.ctx(e2, 0, 0.0, 2000);
    c.irm = &bare;
    const auto d2 = e2.tick(c, fx.rng);
    CHECK(d2.state.kind == BehaviorKind::ReturnToComms);
    CHECK(d2.state.target == 0);
  }
}

TEST_CASE("stuck recovery staging with a scripted slip patch") {
  MissionFixture fx;
  fx.config.p_unstick = 1.0;
  fx.robot.health = Health::Nominal;
  Executive exec(1, Platform::Legged, fx.config);

  // Scripted 40% slip: commanded 1.0, measured 0.6 -> mean diff 0.4 > 0.3.
  // Oracle trace: detector fires once the window is covered (t >= 5), stage
  // 0 resets the planner and clears history; discrepancy persists through
  // the probation window; stage 1 wiggles for 4 s; after the wiggle the
  // robot comes free (p_unstick = 1) and a clean probation window closes
  // the recovery.
  int t = 0;
  auto feed = [&](double measured) {
    exec.record_speed_sample(t * 1.0, 1.0, measured);
    const auto d = exec.tick(fx.ctx(exec, t, t * 1.0, 0), fx.rng);
    ++t;
    return d;
  };

  ExecutiveDecision d;
  for (int i = 0; i <= 5; ++i) d = feed(0.6);
  CHECK(exec.state().kind == BehaviorKind::StuckRecovery);
  CHECK(exec.state().stage == 0);
  bool planner_reset_seen = d.planner_reset;
  CHECK(planner_reset_seen);

  // Probation: still slipping badly for the whole window.
  while (exec.state().kind == BehaviorKind::StuckRecovery && exec.state().stage == 0) {
    d = feed(0.6);
  }
  CHECK(exec.state().stage == 1);

  // Wiggle phase, then a clean probation window (slip cleared).
  for (int i = 0; i < 30 && exec.state().kind == BehaviorKind::StuckRecovery; ++i) {
    d = feed(1.0);
  }
  CHECK(exec.state().kind == BehaviorKind::Explore);
}

TEST_CASE("stuck persisting through both stages escalates") {
  MissionFixture fx;
  fx.config.p_unstick = 0.0;
  Executive exec(1, Platform::Legged, fx.config);
  int t = 0;
  bool notified = false;
  for (int i = 0; i < 60 && exec.state().kind != BehaviorKind::AwaitSupervisor; ++i) {
    exec.record_speed_sample(t * 1.0, 1.0, 0.5);
    const auto d = exec.tick(fx.ctx(exec, t, t * 1.0, 0), fx.rng);
    for (const auto& ev : d.events) {
      if (ev.kind == EventKind::SupervisorNotified) notified = true;
    }
    ++t;
  }
  CHECK(exec.state().kind == BehaviorKind::AwaitSupervisor);
  CHECK(exec.state().cause == SupervisorCause::StuckRecoveryFailed);
  CHECK(notified);
}

TEST_CASE("watchdog") {
  MissionConfig cfg;
  cfg.heartbeat_timeout_s = 3.0;
  cfg.restart_latency_s = 2.0;
  cfg.restart_budget = 2;

  SUBCASE("fresh heartbeats take no action") {
    Watchdog wd({"odometry", "mapper"}, cfg);
    for (int t = 0; t < 20; ++t) {
      const auto a = wd.step(t * 1.0);
      CHECK(a.restarted.empty());
      CHECK_FALSE(a.escalate);
    }
  }
  SUBCASE("one stale component gets exactly one restart") {
    Watchdog wd({"odometry", "mapper"}, cfg);
    wd.step(0.0);
    wd.fail_component("mapper", false);
    int restarts = 0;
    for (int t = 1; t <= 10; ++t) {
      const auto a = wd.step(t * 1.0);
      restarts += static_cast<int>(a.restarted.size());
      CHECK_FALSE(a.escalate);
    }
    CHECK(restarts == 1);
  }
  SUBCASE("persistent failure exhausts the budget then escalates at the oracle tick") {
    Watchdog wd({"mapper"}, cfg);
    wd.step(0.0);
    wd.fail_component("mapper", true);
    // Oracle: heartbeat stops at t=0. Timeout at t>3 -> restart 1 at t=4,
    // revive attempt at t=6 (still failed), next timeout at t>9 -> restart
    // 2 at t=10, revive at 12, timeout at t>15 -> budget exhausted ->
    // escalate at t=16.
    std::vector<int> restart_ticks;
    int escalate_tick = -1;
    for (int t = 1; t <= 20 && escalate_tick < 0; ++t) {
      const auto a = wd.step(t * 1.0);
      if (!a.restarted.empty()) restart_ticks.push_back(t);
      if (a.escalate) escalate_tick = t;
    }
    CHECK(restart_ticks == std::vector<int>{4, 10});
    CHECK(escalate_tick == 16);
  }
}

TEST_CASE("endogenous fault escalation through the executive") {
  MissionFixture fx;
  fx.config.restart_budget = 1;
  Executive exec(1, Platform::Legged, fx.config);
  std::vector<SupervisorEvent> script{
      {0.0, 1, "fail_component", {{"component", "mapper"}, {"persistent", true}}}};
  int t = 0;
  bool restarted = false;
  while (t < 40 && exec.state().kind != BehaviorKind::AwaitSupervisor) {
    auto c = fx.ctx(exec, t, t * 1.0, 0);
    if (t == 0) c.supervisor_events = script;
    const auto d = exec.tick(c, fx.rng);
    for (const auto& ev : d.events) {
      if (ev.kind == EventKind::ComponentRestarted) restarted = true;
    }
    ++t;
  }
  CHECK(restarted);
  CHECK(exec.state().kind == BehaviorKind::AwaitSupervisor);
  CHECK(exec.state().cause == SupervisorCause::EndogenousFault);
}

TEST_CASE("mission health") {
  MissionFixture fx;
  Executive exec(1, Platform::Legged, fx.config);

  SUBCASE("connected robot reports ~zero disconnection time") {
    exec.tick(fx.ctx(exec, 0, 0.0, 50, true), fx.rng);
    const auto h = exec.mission_health(fx.ctx(exec, 0, 0.0, 50, true));
    CHECK(h.time_since_last_connection_s == doctest::Approx(0.0));
    CHECK(h.buffer_size_bytes == 50);
  }
  SUBCASE("300 s blackout reads 300") {
    exec.tick(fx.ctx(exec, 0, 0.0, 50, true), fx.rng);
    for (int t = 1; t <= 300; ++t) {
      exec.tick(fx.ctx(exec, t, t * 1.0, 50, false), fx.rng);
    }
    const auto h = exec.mission_health(fx.ctx(exec, 300, 300.0, 50, false));
    CHECK(h.time_since_last_connection_s == doctest::Approx(300.0).epsilon(0.01));
  }
  SUBCASE("progress is the visited share of known nodes") {
    const auto h = exec.mission_health(fx.ctx(exec, 0, 0.0, 0, true));
    CHECK(h.mission_progress == doctest::Approx(1.0));  // fully explored fixture
  }
}

TEST_CASE("priority: fall beats stuck when both monitors fire") {
  RngStream rng(31337);
  for (int trial = 0; trial < 50; ++trial) {
    MissionFixture fx;
    Executive exec(1, Platform::Legged, fx.config);
    // Randomized monitor inputs that fire both detectors.
    fx.robot.health = Health::Fallen;
    for (int k = 0; k < 8; ++k) {
      exec.record_speed_sample(k * 1.0, 1.0, rng.uniform(0.0, 0.4));
    }
    const auto d = exec.tick(fx.ctx(exec, 8, 8.0, 0), rng);
    CHECK(d.state.kind == BehaviorKind::FallRecovery);
  }
}
