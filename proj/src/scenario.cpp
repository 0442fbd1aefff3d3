#include "mrex/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mrex/events.hpp"

namespace mrex {

namespace {

using nlohmann::json;

double require_number(const json& j, const std::string& field, const std::string& where) {
  if (!j.contains(field) || !j[field].is_number()) {
    throw ValidationError("scenario: " + where + " missing numeric field '" + field + "'");
  }
  return j[field].get<double>();
}

Platform parse_platform(const std::string& s) {
  if (s == "wheeled") return Platform::Wheeled;
  if (s == "legged") return Platform::Legged;
  if (s == "aerial") return Platform::Aerial;
  throw ValidationError("scenario: unknown platform '" + s + "'");
}

Vec3 parse_vec3(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() < 2 || j.size() > 3) {
    throw ValidationError("scenario: " + where + " must be [x, y] or [x, y, z]");
  }
  Vec3 v{j[0].get<double>(), j[1].get<double>(), 0.0};
  if (j.size() == 3) v.z = j[2].get<double>();
  return v;
}

std::optional<OccupancyGrid> parse_occupancy(const json& j) {
  if (!j.contains("occupancy") || j["occupancy"].is_null()) return std::nullopt;
  const json& o = j["occupancy"];
  const Vec3 origin = parse_vec3(o.at("origin"), "occupancy.origin");
  const double cell = require_number(o, "cell_size", "occupancy");
  const auto& rows = o.at("rows");
  if (!rows.is_array() || rows.empty()) {
    throw ValidationError("scenario: occupancy.rows must be a non-empty array of strings");
  }
  const int height = static_cast<int>(rows.size());
  const int width = static_cast<int>(rows[0].get<std::string>().size());
  std::vector<std::uint8_t> cells;
  cells.reserve(static_cast<std::size_t>(width) * height);
  // rows[0] is the top row (max y); storage is row-major from y = 0.
  for (int y = height - 1; y >= 0; --y) {
    const std::string row = rows[y].get<std::string>();
    if (static_cast<int>(row.size()) != width) {
      throw ValidationError("scenario: occupancy rows must have equal width");
    }
    for (char c : row) cells.push_back(c == '#' ? 1 : 0);
  }
  return OccupancyGrid(origin, cell, width, height, std::move(cells));
}

void apply_params(ScenarioParams& p, const json& j) {
  auto num = [&](const char* k, double& slot) {
    if (j.contains(k)) slot = j[k].get<double>();
  };
  auto i64 = [&](const char* k, std::int64_t& slot) {
    if (j.contains(k)) slot = j[k].get<std::int64_t>();
  };
  auto i32 = [&](const char* k, int& slot) {
    if (j.contains(k)) slot = j[k].get<int>();
  };
  auto opt = [&](const char* k, std::optional<double>& slot) {
    if (j.contains(k)) slot = j[k].get<double>();
  };
  num("dt_s", p.dt_s);
  num("duration_s", p.duration_s);
  num("slip_max", p.slip_max);
  opt("slip_max_wheeled", p.slip_max_wheeled);
  opt("slip_max_legged", p.slip_max_legged);
  opt("slip_max_aerial", p.slip_max_aerial);
  num("eps_cov", p.eps_cov);
  num("initial_covered_prob", p.initial_covered_prob);
  num("sensor_max_m", p.sensor_max_m);
  num("kappa", p.kappa);
  num("local_window_m", p.local_window_m);
  num("frame_loss_rate", p.frame_loss_rate);
  num("global_replan_interval_s", p.global_replan_interval_s);
  i32("gls_iterations", p.gls_iterations);
  num("tour_gamma", p.tour_gamma);
  if (j.contains("frontier_greedy_baseline")) {
    p.frontier_greedy_baseline = j["frontier_greedy_baseline"].get<bool>();
  }
  i64("map_scan_bytes", p.map_scan_bytes);
  i64("pose_bytes", p.pose_bytes);
  num("pose_period_s", p.pose_period_s);
  i64("health_bytes", p.health_bytes);

  num("frequency_hz", p.link.frequency_hz);
  num("noise_floor_dbm", p.link.noise_floor_dbm);
  num("wall_damping_db", p.link.wall_damping_db);
  num("bandwidth_hz", p.link.bandwidth_hz);
  num("max_snr_db", p.link.max_snr_db);
  num("link_floor_db", p.link.link_floor_db);

  num("bucket_rate_bytes_per_s", p.reporter.bucket_rate_bytes_per_s);
  num("bucket_burst_bytes", p.reporter.bucket_burst_bytes);
  num("retransmit_timeout_s", p.reporter.retransmit_timeout_s);
  num("time_sensitive_ttl_s", p.reporter.time_sensitive_ttl_s);
  num("rate_window_s", p.reporter.rate_window_s);
  num("compression_ratio", p.reporter.compression_ratio);

  num("t_c_db", p.mission.t_c_db);
  i64("t_b_low_bytes", p.mission.t_b_low_bytes);
  i64("t_b_high_bytes", p.mission.t_b_high_bytes);
  num("wait_timeout_s", p.mission.wait_timeout_s);
  num("t_disc_s", p.mission.t_disc_s);
  num("stuck_window_s", p.mission.stuck_window_s);
  num("stuck_threshold_mps", p.mission.stuck_threshold_mps);
  num("wiggle_duration_s", p.mission.wiggle_duration_s);
  i32("fall_attempts_n", p.mission.fall_attempts_n);
  num("p_selfright", p.mission.p_selfright);
  num("p_unstick", p.mission.p_unstick);
  num("p_jam", p.mission.p_jam);
  num("deploy_snr_db", p.mission.deploy_snr_db);
  num("overlap_fraction_max", p.mission.overlap_fraction_max);
  num("health_period_s", p.mission.health_period_s);

  num("gamma", p.reward.gamma);
  num("lambda_cost", p.reward.lambda_cost);
  i32("horizon_steps", p.reward.horizon_steps);
  i32("replan_interval", p.reward.replan_interval);

  i32("rollout_count", p.rollout.rollouts);
  i32("rollout_depth", p.rollout.depth);
  num("guidance_weight", p.rollout.guidance_weight);

  // Keep the planners' shared knobs in sync with the top-level ones.
  p.rollout.gamma = p.reward.gamma;
  p.rollout.lambda_cost = p.reward.lambda_cost;
  p.rollout.depth = p.reward.horizon_steps;
  p.rollout.sensor_max_m = p.sensor_max_m;
  p.rollout.kappa = p.kappa;
  p.rollout.eps_cov = p.eps_cov;
}

}  // namespace

Scenario load_scenario_json(const std::string& text, const std::string& source_name) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError("scenario: parse error in " + source_name + ": " + e.what());
  }

  std::vector<WorldNode> nodes;
  if (!j.contains("nodes") || !j["nodes"].is_array() || j["nodes"].empty()) {
    throw ValidationError("scenario: 'nodes' must be a non-empty array");
  }
  for (const auto& n : j["nodes"]) {
    WorldNode wn;
    wn.id = static_cast<NodeId>(require_number(n, "id", "node"));
    wn.position = parse_vec3(n.at("pos"), "node.pos");
    wn.clearance = n.value("clearance", 1.0);
    nodes.push_back(wn);
  }

  std::vector<WorldEdge> edges;
  if (!j.contains("edges") || !j["edges"].is_array()) {
    throw ValidationError("scenario: 'edges' must be an array");
  }
  for (const auto& e : j["edges"]) {
    WorldEdge we;
    we.a = static_cast<NodeId>(require_number(e, "a", "edge"));
    we.b = static_cast<NodeId>(require_number(e, "b", "edge"));
    we.length = require_number(e, "length", "edge");
    we.nominal_speed = e.value("speed", 1.0);
    we.risk = e.value("risk", 0.0);
    if (we.risk < 0.0 || we.risk > 1.0) {
      throw ValidationError("scenario: edge (" + std::to_string(we.a) + "," +
                            std::to_string(we.b) + "): risk out of range");
    }
    edges.push_back(we);
  }

  const NodeId base = j.contains("base") ? j["base"].get<NodeId>() : nodes.front().id;

  Scenario sc{WorldGraph(std::move(nodes), std::move(edges), base, parse_occupancy(j)),
              {}, 20.0, {}, {}, source_name, 0};
  sc.content_digest = fnv1a64_bytes(text.data(), text.size());

  if (j.contains("params")) apply_params(sc.params, j["params"]);
  if (!(sc.params.dt_s > 0)) throw ValidationError("scenario: dt_s must be > 0");
  if (!(sc.params.duration_s > 0)) throw ValidationError("scenario: duration_s must be > 0");
  if (sc.params.mission.t_b_low_bytes >= sc.params.mission.t_b_high_bytes) {
    throw ValidationError("scenario: t_b_low_bytes must be below t_b_high_bytes");
  }
  if (sc.params.eps_cov < 0 || sc.params.eps_cov >= 1) {
    throw ValidationError("scenario: eps_cov out of range");
  }
  if (sc.params.initial_covered_prob < 0 || sc.params.initial_covered_prob > 1) {
    throw ValidationError("scenario: initial_covered_prob out of range");
  }

  if (!j.contains("robots") || !j["robots"].is_array() || j["robots"].empty()) {
    throw ValidationError("scenario: 'robots' must be a non-empty array");
  }
  for (const auto& r : j["robots"]) {
    RobotSpec spec;
    spec.robot_id = static_cast<int>(require_number(r, "id", "robot"));
    spec.platform = parse_platform(r.value("platform", "wheeled"));
    spec.carried_radios = r.value("carried_radios", 0);
    spec.tx_power_dbm = r.value("tx_power_dbm", 20.0);
    sc.robots.push_back(spec);
  }
  for (std::size_t i = 0; i + 1 < sc.robots.size(); ++i) {
    for (std::size_t k = i + 1; k < sc.robots.size(); ++k) {
      if (sc.robots[i].robot_id == sc.robots[k].robot_id) {
        throw ValidationError("scenario: duplicate robot id");
      }
    }
  }

  if (j.contains("radios") && j["radios"].contains("base_tx_power_dbm")) {
    sc.base_tx_power_dbm = j["radios"]["base_tx_power_dbm"].get<double>();
  }

  if (j.contains("supervisor_script")) {
    for (const auto& s : j["supervisor_script"]) {
      SupervisorEvent ev;
      ev.time_s = require_number(s, "time_s", "supervisor_script");
      ev.robot_id = static_cast<int>(require_number(s, "robot_id", "supervisor_script"));
      ev.action = s.at("action").get<std::string>();
      ev.params = s.value("params", json::object());
      sc.supervisor_script.push_back(ev);
    }
  }
  return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("scenario: cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  Scenario sc = load_scenario_json(buf.str(), path.string());
  sc.source_path = path.string();
  return sc;
}

void apply_override(ScenarioParams& params, const std::string& key, const std::string& value) {
  static const std::vector<std::string> known = {
      "dt_s", "duration_s", "slip_max", "slip_max_wheeled", "slip_max_legged",
      "slip_max_aerial", "eps_cov", "initial_covered_prob", "sensor_max_m",
      "kappa", "local_window_m", "frame_loss_rate", "global_replan_interval_s",
      "gls_iterations", "tour_gamma", "frontier_greedy_baseline", "map_scan_bytes",
      "pose_bytes", "pose_period_s", "health_bytes", "frequency_hz", "noise_floor_dbm",
      "wall_damping_db", "bandwidth_hz", "max_snr_db", "link_floor_db",
      "bucket_rate_bytes_per_s", "bucket_burst_bytes", "retransmit_timeout_s",
      "time_sensitive_ttl_s", "rate_window_s", "compression_ratio", "t_c_db", "t_b_low_bytes",
      "t_b_high_bytes", "wait_timeout_s", "t_disc_s", "stuck_window_s", "stuck_threshold_mps",
      "wiggle_duration_s", "fall_attempts_n", "p_selfright", "p_unstick", "p_jam",
      "deploy_snr_db", "overlap_fraction_max", "health_period_s", "gamma", "lambda_cost",
      "horizon_steps", "replan_interval", "rollout_count", "rollout_depth", "guidance_weight"};
  if (std::find(known.begin(), known.end(), key) == known.end()) {
    throw ValidationError("override: unknown parameter '" + key + "'");
  }
  nlohmann::json j;
  try {
    j[key] = nlohmann::json::parse(value);
  } catch (const nlohmann::json::parse_error&) {
    j[key] = value;
  }
  apply_params(params, j);
}

}  // namespace mrex
