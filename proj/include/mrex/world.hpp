#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrex/events.hpp"
#include "mrex/geometry.hpp"
#include "mrex/rng.hpp"

namespace mrex {

using NodeId = int;

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct WorldNode {
  NodeId id = 0;
  Vec3 position;
  double clearance = 1.0;  // meters of local spaciousness
};

struct WorldEdge {
  NodeId a = 0;
  NodeId b = 0;
  double length = 1.0;         // meters
  double nominal_speed = 1.0;  // m/s
  double risk = 0.0;           // P(traversal-failure) per full traversal
};

// 2D boolean grid used only for RF wall counting.
class OccupancyGrid {
 public:
  OccupancyGrid(Vec3 origin, double cell_size, int width, int height,
                std::vector<std::uint8_t> cells);

  bool occupied(int ix, int iy) const;
  double cell_size() const { return cell_size_; }
  int width() const { return width_; }
  int height() const { return height_; }

  // Number of distinct occupied cells the segment a-b crosses (x/y plane).
  // Symmetric in its arguments by construction.
  int count_walls(const Vec3& a, const Vec3& b) const;

 private:
  Vec3 origin_;
  double cell_size_;
  int width_;
  int height_;
  std::vector<std::uint8_t> cells_;
};

class WorldGraph {
 public:
  // Validates all invariants; throws ValidationError naming the violation.
  WorldGraph(std::vector<WorldNode> nodes, std::vector<WorldEdge> edges, NodeId base,
             std::optional<OccupancyGrid> occupancy = std::nullopt);

  NodeId base() const { return base_; }
  std::size_t node_count() const { return nodes_.size(); }
  std::span<const WorldNode> nodes() const { return nodes_; }
  std::span<const WorldEdge> edges() const { return edges_; }
  const std::optional<OccupancyGrid>& occupancy() const { return occupancy_; }

  bool has_node(NodeId id) const;
  const WorldNode& node(NodeId id) const;
  // Dense index in [0, node_count) for belief vectors.
  std::size_t index_of(NodeId id) const;
  NodeId id_at(std::size_t index) const { return nodes_[index].id; }

  // (neighbor id, edge index) pairs, sorted by neighbor id.
  std::span<const std::pair<NodeId, int>> neighbors(NodeId id) const;
  const WorldEdge* edge_between(NodeId a, NodeId b) const;

 private:
  std::vector<WorldNode> nodes_;
  std::vector<WorldEdge> edges_;
  NodeId base_;
  std::optional<OccupancyGrid> occupancy_;
  std::vector<std::vector<std::pair<NodeId, int>>> adjacency_;  // by node index
  std::vector<NodeId> index_to_id_;
};

double binary_entropy_bits(double p);

// Per-node probability that the node has been covered; entropy over this
// belief is what exploration burns down.
class CoverageBelief {
 public:
  CoverageBelief(std::size_t node_count, double initial_prob);

  double covered_prob(std::size_t index) const { return probs_[index]; }
  void set_covered_prob(std::size_t index, double p);
  std::size_t size() const { return probs_.size(); }

  double entropy_bits() const;

  // Marks every node within coverage_radius of pose as covered with
  // probability 1-eps_cov (never lowers a node's probability). Returns the
  // entropy reduction in bits, >= 0 for any belief with probs >= eps_cov.
  double apply_observation(const WorldGraph& world, const Vec3& pose, double coverage_radius,
                           double eps_cov);

 private:
  std::vector<double> probs_;
};

enum class Platform { Wheeled, Legged, Aerial };
enum class Health { Nominal, Stuck, Fallen, OutOfService };

const char* to_string(Platform p);
const char* to_string(Health h);

// Robot sits at a node (from == to, progress 0) or part-way along an edge.
struct RobotLocation {
  NodeId from = 0;
  NodeId to = 0;
  double progress = 0.0;  // fraction of edge length from 'from' toward 'to'

  bool at_node() const { return from == to; }
};

struct RobotState {
  int robot_id = 0;
  Platform platform = Platform::Wheeled;
  RobotLocation location;
  double commanded_speed = 0.0;
  double measured_speed = 0.0;
  Health health = Health::Nominal;
  double odometer = 0.0;
};

Vec3 robot_position(const RobotState& robot, const WorldGraph& world);
// Node the robot currently occupies or most recently left.
NodeId robot_anchor_node(const RobotState& robot);

// Advance along the current edge toward `toward` at `speed`.
struct MoveCommand {
  int robot_id = 0;
  NodeId toward = 0;
  double speed = 0.0;
};

struct StepParams {
  double slip_max = 0.1;  // slip ~ U[0, slip_max]
  // Per-platform overrides; unset platforms use slip_max.
  std::optional<double> slip_max_wheeled;
  std::optional<double> slip_max_legged;
  std::optional<double> slip_max_aerial;

  double slip_for(Platform p) const {
    switch (p) {
      case Platform::Wheeled: return slip_max_wheeled.value_or(slip_max);
      case Platform::Legged: return slip_max_legged.value_or(slip_max);
      case Platform::Aerial: return slip_max_aerial.value_or(slip_max);
    }
    return slip_max;
  }
};

// Advances robots over dt seconds. measured = commanded * (1 - slip);
// traversal failures fire with per-tick probability 1 - (1-risk)^(dl/L) so
// the compounded probability over a full traversal equals the edge risk.
// Commands for non-Nominal robots are rejected per-robot with an event.
std::vector<SimEvent> step(const WorldGraph& world, std::vector<RobotState>& robots,
                           std::span<const MoveCommand> commands, double dt, std::int64_t tick,
                           RngStream& rng, const StepParams& params);

// Recovery behaviors use this to return a Stuck/Fallen robot to Nominal.
void clear_fault(RobotState& robot);

}  // namespace mrex
