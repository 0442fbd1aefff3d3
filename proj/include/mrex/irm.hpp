#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mrex/geometry.hpp"
#include "mrex/world.hpp"

namespace mrex {

enum class IrmNodeKind { Base, Visited, Frontier, CommsCheckpoint, Radio };
enum class CommsClass { None, Weak, Strong };  // ordered: None < Weak < Strong

const char* to_string(IrmNodeKind k);
const char* to_string(CommsClass c);

struct CommsThresholds {
  double strong_db = 20.0;  // T_C, boundary inclusive
  double weak_db = 5.0;     // T_none, boundary inclusive for Weak
};

CommsClass classify_checkpoint(double snr_db, const CommsThresholds& thresholds = {});

struct IrmNode {
  NodeId id = 0;
  Vec3 position;
  IrmNodeKind kind = IrmNodeKind::Frontier;
  std::optional<double> snr_db;
  std::optional<CommsClass> comms_class;
  std::int64_t snr_stamp = -1;  // recency of the annotation, for merge

  bool is_comms_checkpoint() const { return snr_db.has_value(); }
};

struct IrmEdge {
  NodeId a = 0;
  NodeId b = 0;
  double expected_time = 1.0;  // seconds
  double success_prob = 1.0;   // (0,1]
};

// Shared belief graph over explored space. Node ids mirror world node ids
// when built via update_from_traversal.
class Irm {
 public:
  Irm() = default;

  std::uint64_t revision() const { return revision_; }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return edges_.size(); }
  bool has_node(NodeId id) const { return nodes_.count(id) != 0; }
  const IrmNode& node(NodeId id) const;
  const std::map<NodeId, IrmNode>& nodes() const { return nodes_; }
  const std::vector<IrmEdge>& edges() const { return edges_; }
  const IrmEdge* edge_between(NodeId a, NodeId b) const;
  std::vector<NodeId> neighbors(NodeId id) const;  // sorted

  void add_node(IrmNode n);  // bumps revision; upserts by id
  void add_edge(IrmEdge e);  // bumps revision; no-op if the pair exists

  // Marks the node at `at` Visited (Base stays Base), adds unvisited world
  // neighbors as Frontier, annotates edges with expected_time =
  // length/speed and success_prob = 1 - risk. Idempotent; returns the
  // number of graph changes made.
  int update_from_traversal(const WorldGraph& world, NodeId at);

  // Attach/refresh a comms-checkpoint annotation.
  void annotate_checkpoint(NodeId id, double snr_db, CommsClass cls, std::int64_t stamp);

  // Subgraph induced by nodes within window_radius of pose, plus `current`.
  Irm extract_local(const Vec3& pose, NodeId current, double window_radius) const;

  // Expected travel time (seconds) from `from` to every node, +inf where
  // unreachable; Dijkstra over expected_time.
  std::map<NodeId, double> travel_times_from(NodeId from) const;

  // Node sequence of the minimum-expected-time path, empty when
  // unreachable. Includes both endpoints.
  std::vector<NodeId> shortest_path(NodeId from, NodeId to) const;

  // Revision floor after merges/copies so per-holder monotonicity holds.
  void ensure_revision_at_least(std::uint64_t r);

  // Closest Strong comms checkpoint, or a Frontier adjacent to one, by
  // expected travel time from `from`; ties break toward the lowest node id.
  // With toward_base set, only candidates strictly closer to Base than
  // `current_target` qualify. Returns nullopt when no Strong checkpoint
  // exists (caller falls back to Base).
  std::optional<NodeId> nearest_strong_checkpoint(
      NodeId from, bool toward_base = false,
      std::optional<NodeId> current_target = std::nullopt) const;

  std::optional<NodeId> base_node() const;

  // Union of both graphs; nodes within merge_radius collapse to one keeping
  // the higher-information kind and the newest snr annotation. Commutative
  // and associative up to node-id relabeling.
  static Irm merge(const Irm& a, const Irm& b, double merge_radius = 1.0);

  // One JSON record per line: nodes then edges, with the revision stamp.
  std::string to_jsonl() const;

 private:
  std::map<NodeId, IrmNode> nodes_;
  std::vector<IrmEdge> edges_;
  std::map<NodeId, std::vector<std::pair<NodeId, int>>> adjacency_;
  std::uint64_t revision_ = 0;
};

}  // namespace mrex
