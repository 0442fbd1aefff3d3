#include "mrex/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

namespace mrex {

OccupancyGrid::OccupancyGrid(Vec3 origin, double cell_size, int width, int height,
                             std::vector<std::uint8_t> cells)
    : origin_(origin), cell_size_(cell_size), width_(width), height_(height),
      cells_(std::move(cells)) {
  if (cell_size_ <= 0) throw ValidationError("occupancy: cell_size must be > 0");
  if (width_ <= 0 || height_ <= 0) throw ValidationError("occupancy: empty grid");
  if (cells_.size() != static_cast<std::size_t>(width_) * height_) {
    throw ValidationError("occupancy: cell count does not match width*height");
  }
}

bool OccupancyGrid::occupied(int ix, int iy) const {
  if (ix < 0 || iy < 0 || ix >= width_ || iy >= height_) return false;
  return cells_[static_cast<std::size_t>(iy) * width_ + ix] != 0;
}

int OccupancyGrid::count_walls(const Vec3& a_in, const Vec3& b_in) const {
  // Canonical endpoint order so both directions march the same cell set.
  const Vec3* a = &a_in;
  const Vec3* b = &b_in;
  if (b_in.x < a_in.x || (b_in.x == a_in.x && b_in.y < a_in.y)) std::swap(a, b);

  const double ax = (a->x - origin_.x) / cell_size_;
  const double ay = (a->y - origin_.y) / cell_size_;
  const double bx = (b->x - origin_.x) / cell_size_;
  const double by = (b->y - origin_.y) / cell_size_;

  // Amanatides-Woo traversal in grid coordinates.
  int ix = static_cast<int>(std::floor(ax));
  int iy = static_cast<int>(std::floor(ay));
  const int end_ix = static_cast<int>(std::floor(bx));
  const int end_iy = static_cast<int>(std::floor(by));

  const double dx = bx - ax;
  const double dy = by - ay;
  const int step_x = dx > 0 ? 1 : (dx < 0 ? -1 : 0);
  const int step_y = dy > 0 ? 1 : (dy < 0 ? -1 : 0);

  double t_max_x = std::numeric_limits<double>::infinity();
  double t_max_y = std::numeric_limits<double>::infinity();
  double t_delta_x = std::numeric_limits<double>::infinity();
  double t_delta_y = std::numeric_limits<double>::infinity();
  if (step_x != 0) {
    const double next_x = step_x > 0 ? std::floor(ax) + 1 : std::floor(ax);
    t_max_x = (next_x - ax) / dx;
    t_delta_x = 1.0 / std::abs(dx);
  }
  if (step_y != 0) {
    const double next_y = step_y > 0 ? std::floor(ay) + 1 : std::floor(ay);
    t_max_y = (next_y - ay) / dy;
    t_delta_y = 1.0 / std::abs(dy);
  }

  int walls = occupied(ix, iy) ? 1 : 0;
  // Guard against degenerate float loops; the cell count along a segment is
  // bounded by the Manhattan cell distance.
  int remaining = std::abs(end_ix - ix) + std::abs(end_iy - iy);
  while ((ix != end_ix || iy != end_iy) && remaining-- > 0) {
    if (t_max_x < t_max_y) {
      ix += step_x;
      t_max_x += t_delta_x;
    } else {
      iy += step_y;
      t_max_y += t_delta_y;
    }
    if (occupied(ix, iy)) ++walls;
  }
  return walls;
}

WorldGraph::WorldGraph(std::vector<WorldNode> nodes, std::vector<WorldEdge> edges, NodeId base,
                       std::optional<OccupancyGrid> occupancy)
    : nodes_(std::move(nodes)), edges_(std::move(edges)), base_(base),
      occupancy_(std::move(occupancy)) {
  if (nodes_.empty()) throw ValidationError("world: no nodes");
  std::sort(nodes_.begin(), nodes_.end(),
            [](const WorldNode& a, const WorldNode& b) { return a.id < b.id; });
  for (std::size_t i = 0; i + 1 < nodes_.size(); ++i) {
    if (nodes_[i].id == nodes_[i + 1].id) {
      throw ValidationError("world: duplicate node id " + std::to_string(nodes_[i].id));
    }
  }
  for (const auto& n : nodes_) {
    if (!(n.clearance > 0)) {
      throw ValidationError("world: clearance must be > 0 at node " + std::to_string(n.id));
    }
    index_to_id_.push_back(n.id);
  }
  if (!has_node(base_)) throw ValidationError("world: base node does not exist");

  adjacency_.assign(nodes_.size(), {});
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    const auto& edge = edges_[e];
    if (!has_node(edge.a) || !has_node(edge.b)) {
      throw ValidationError("world: edge references unknown node");
    }
    if (edge.a == edge.b) throw ValidationError("world: self-loop edge");
    if (!(edge.length > 0)) throw ValidationError("world: edge length must be > 0");
    if (!(edge.nominal_speed > 0)) throw ValidationError("world: edge speed must be > 0");
    if (edge.risk < 0 || edge.risk > 1) throw ValidationError("world: risk out of range [0,1]");
    adjacency_[index_of(edge.a)].emplace_back(edge.b, static_cast<int>(e));
    adjacency_[index_of(edge.b)].emplace_back(edge.a, static_cast<int>(e));
  }
  for (auto& adj : adjacency_) std::sort(adj.begin(), adj.end());

  // Connectivity from base.
  std::vector<char> seen(nodes_.size(), 0);
  std::queue<std::size_t> q;
  q.push(index_of(base_));
  seen[index_of(base_)] = 1;
  std::size_t reached = 1;
  while (!q.empty()) {
    const std::size_t u = q.front();
    q.pop();
    for (const auto& [v_id, e] : adjacency_[u]) {
      const std::size_t v = index_of(v_id);
      if (!seen[v]) {
        seen[v] = 1;
        ++reached;
        q.push(v);
      }
    }
  }
  if (reached != nodes_.size()) {
    throw ValidationError("world: graph not connected from base");
  }
}

bool WorldGraph::has_node(NodeId id) const {
  return std::binary_search(index_to_id_.begin(), index_to_id_.end(), id);
}

std::size_t WorldGraph::index_of(NodeId id) const {
  const auto it = std::lower_bound(index_to_id_.begin(), index_to_id_.end(), id);
  if (it == index_to_id_.end() || *it != id) {
    throw std::out_of_range("world: unknown node id " + std::to_string(id));
  }
  return static_cast<std::size_t>(it - index_to_id_.begin());
}

const WorldNode& WorldGraph::node(NodeId id) const { return nodes_[index_of(id)]; }

std::span<const std::pair<NodeId, int>> WorldGraph::neighbors(NodeId id) const {
  return adjacency_[index_of(id)];
}

const WorldEdge* WorldGraph::edge_between(NodeId a, NodeId b) const {
  for (const auto& [n, e] : adjacency_[index_of(a)]) {
    if (n == b) return &edges_[e];
  }
  return nullptr;
}

double binary_entropy_bits(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

CoverageBelief::CoverageBelief(std::size_t node_count, double initial_prob)
    : probs_(node_count, initial_prob) {
  if (initial_prob < 0 || initial_prob > 1) {
    throw ValidationError("coverage: initial probability out of range");
  }
}

void CoverageBelief::set_covered_prob(std::size_t index, double p) {
  if (p < 0 || p > 1) throw ValidationError("coverage: probability out of range");
  probs_[index] = p;
}

double CoverageBelief::entropy_bits() const {
  double h = 0.0;
  for (double p : probs_) h += binary_entropy_bits(p);
  return h;
}

double CoverageBelief::apply_observation(const WorldGraph& world, const Vec3& pose,
                                         double coverage_radius, double eps_cov) {
  const double target = 1.0 - eps_cov;
  double gain = 0.0;
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    if (distance(world.nodes()[i].position, pose) > coverage_radius) continue;
    if (probs_[i] >= target) continue;
    gain += binary_entropy_bits(probs_[i]) - binary_entropy_bits(target);
    probs_[i] = target;
  }
  return gain;
}

const char* to_string(Platform p) {
  switch (p) {
    case Platform::Wheeled: return "wheeled";
    case Platform::Legged: return "legged";
    case Platform::Aerial: return "aerial";
  }
  return "unknown";
}

const char* to_string(Health h) {
  switch (h) {
    case Health::Nominal: return "nominal";
    case Health::Stuck: return "stuck";
    case Health::Fallen: return "fallen";
    case Health::OutOfService: return "out_of_service";
  }
  return "unknown";
}

Vec3 robot_position(const RobotState& robot, const WorldGraph& world) {
  const auto& loc = robot.location;
  if (loc.at_node()) return world.node(loc.from).position;
  return lerp(world.node(loc.from).position, world.node(loc.to).position, loc.progress);
}

NodeId robot_anchor_node(const RobotState& robot) {
  const auto& loc = robot.location;
  if (loc.at_node()) return loc.from;
  return loc.progress < 0.5 ? loc.from : loc.to;
}

void clear_fault(RobotState& robot) {
  if (robot.health == Health::Stuck || robot.health == Health::Fallen) {
    robot.health = Health::Nominal;
    robot.measured_speed = 0.0;
    robot.commanded_speed = 0.0;
  }
}

namespace {

// Starts or continues an edge traversal; returns false for an invalid
// command (not adjacent / wrong continuation).
bool orient_toward(RobotState& robot, const WorldGraph& world, NodeId toward) {
  auto& loc = robot.location;
  if (loc.at_node()) {
    if (world.edge_between(loc.from, toward) == nullptr) return false;
    loc.to = toward;
    loc.progress = 0.0;
    return true;
  }
  if (toward == loc.to) return true;
  if (toward == loc.from) {  // reverse along the same edge
    std::swap(loc.from, loc.to);
    loc.progress = 1.0 - loc.progress;
    return true;
  }
  return false;
}

}  // namespace

std::vector<SimEvent> step(const WorldGraph& world, std::vector<RobotState>& robots,
                           std::span<const MoveCommand> commands, double dt, std::int64_t tick,
                           RngStream& rng, const StepParams& params) {
  if (!(dt > 0)) throw std::invalid_argument("step: dt must be > 0");
  std::vector<SimEvent> events;

  // Commands applied in robot-id order for determinism.
  std::vector<MoveCommand> ordered(commands.begin(), commands.end());
  std::sort(ordered.begin(), ordered.end(),
            [](const MoveCommand& a, const MoveCommand& b) { return a.robot_id < b.robot_id; });

  for (const auto& cmd : ordered) {
    auto it = std::find_if(robots.begin(), robots.end(),
                           [&](const RobotState& r) { return r.robot_id == cmd.robot_id; });
    if (it == robots.end()) continue;
    RobotState& robot = *it;

    if (robot.health != Health::Nominal) {
      events.push_back({tick, robot.robot_id, EventKind::CommandRejected,
                        {{"reason", "robot not nominal"}, {"health", to_string(robot.health)}}});
      continue;
    }
    if (!orient_toward(robot, world, cmd.toward)) {
      events.push_back({tick, robot.robot_id, EventKind::CommandRejected,
                        {{"reason", "target not adjacent"}, {"toward", cmd.toward}}});
      continue;
    }

    const WorldEdge* edge = world.edge_between(robot.location.from, robot.location.to);
    const double slip_max = params.slip_for(robot.platform);
    const double slip = slip_max > 0 ? rng.uniform(0.0, slip_max) : 0.0;
    robot.commanded_speed = cmd.speed;
    robot.measured_speed = cmd.speed * (1.0 - slip);

    double advance = robot.measured_speed * dt;  // meters
    const double remaining = (1.0 - robot.location.progress) * edge->length;
    if (advance >= remaining) advance = remaining;  // clamp at the far endpoint

    robot.location.progress += advance / edge->length;
    robot.odometer += advance;
    const bool arrived = robot.location.progress >= 1.0 - 1e-12;
    if (arrived) {
      robot.location.from = robot.location.to;
      robot.location.progress = 0.0;
    }

    // Distance-proportional hazard: compounding over the whole edge yields
    // exactly the annotated risk regardless of tick size.
    if (edge->risk > 0 && advance > 0) {
      const double p_tick = 1.0 - std::pow(1.0 - edge->risk, advance / edge->length);
      if (rng.bernoulli(p_tick)) {
        if (robot.platform == Platform::Legged) {
          robot.health = Health::Fallen;
          events.push_back({tick, robot.robot_id, EventKind::FallOnset,
                            {{"edge", {edge->a, edge->b}}, {"progress", robot.location.progress}}});
        } else {
          robot.health = Health::Stuck;
          events.push_back({tick, robot.robot_id, EventKind::StuckOnset,
                            {{"edge", {edge->a, edge->b}}, {"progress", robot.location.progress}}});
        }
        robot.measured_speed = 0.0;
        continue;
      }
    }

    events.push_back({tick, robot.robot_id, EventKind::Moved,
                      {{"node", robot.location.from},
                       {"toward", robot.location.to},
                       {"progress", robot.location.progress},
                       {"odometer", robot.odometer}}});
  }
  return events;
}

}  // namespace mrex
