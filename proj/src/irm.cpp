#include "mrex/irm.hpp"

#include <algorithm>
#include <limits>
#include <queue>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace mrex {

const char* to_string(IrmNodeKind k) {
  switch (k) {
    case IrmNodeKind::Base: return "base";
    case IrmNodeKind::Visited: return "visited";
    case IrmNodeKind::Frontier: return "frontier";
    case IrmNodeKind::CommsCheckpoint: return "comms_checkpoint";
    case IrmNodeKind::Radio: return "radio";
  }
  return "unknown";
}

const char* to_string(CommsClass c) {
  switch (c) {
    case CommsClass::None: return "none";
    case CommsClass::Weak: return "weak";
    case CommsClass::Strong: return "strong";
  }
  return "unknown";
}

CommsClass classify_checkpoint(double snr_db, const CommsThresholds& t) {
  if (snr_db >= t.strong_db) return CommsClass::Strong;
  if (snr_db >= t.weak_db) return CommsClass::Weak;
  return CommsClass::None;
}

namespace {

// Higher rank wins when merged nodes disagree on kind.
int kind_rank(IrmNodeKind k) {
  switch (k) {
    case IrmNodeKind::Base: return 4;
    case IrmNodeKind::Radio: return 3;
    case IrmNodeKind::Visited: return 2;
    case IrmNodeKind::CommsCheckpoint: return 1;
    case IrmNodeKind::Frontier: return 0;
  }
  return -1;
}

}  // namespace

const IrmNode& Irm::node(NodeId id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw std::out_of_range("irm: unknown node " + std::to_string(id));
  return it->second;
}

const IrmEdge* Irm::edge_between(NodeId a, NodeId b) const {
  auto it = adjacency_.find(a);
  if (it == adjacency_.end()) return nullptr;
  for (const auto& [n, e] : it->second) {
    if (n == b) return &edges_[e];
  }
  return nullptr;
}

std::vector<NodeId> Irm::neighbors(NodeId id) const {
  std::vector<NodeId> out;
  auto it = adjacency_.find(id);
  if (it == adjacency_.end()) return out;
  out.reserve(it->second.size());
  for (const auto& [n, e] : it->second) out.push_back(n);
  std::sort(out.begin(), out.end());
  return out;
}

void Irm::add_node(IrmNode n) {
  auto it = nodes_.find(n.id);
  if (it != nodes_.end()) {
    IrmNode& cur = it->second;
    const bool same = cur.kind == n.kind && cur.position.x == n.position.x &&
                      cur.position.y == n.position.y && cur.position.z == n.position.z;
    if (same) return;
    // Keep existing annotations unless the incoming node carries newer ones.
    if (!n.snr_db && cur.snr_db) {
      n.snr_db = cur.snr_db;
      n.comms_class = cur.comms_class;
      n.snr_stamp = cur.snr_stamp;
    }
    cur = n;
    ++revision_;
    return;
  }
  nodes_.emplace(n.id, n);
  adjacency_.try_emplace(n.id);
  ++revision_;
}

void Irm::add_edge(IrmEdge e) {
  if (e.a == e.b) throw std::invalid_argument("irm: self-loop edge");
  if (!(e.expected_time > 0)) throw std::invalid_argument("irm: expected_time must be > 0");
  if (!(e.success_prob > 0 && e.success_prob <= 1)) {
    throw std::invalid_argument("irm: success_prob must be in (0,1]");
  }
  if (edge_between(e.a, e.b) != nullptr) return;
  const int idx = static_cast<int>(edges_.size());
  edges_.push_back(e);
  adjacency_[e.a].emplace_back(e.b, idx);
  adjacency_[e.b].emplace_back(e.a, idx);
  ++revision_;
}

int Irm::update_from_traversal(const WorldGraph& world, NodeId at) {
  if (!world.has_node(at)) throw std::out_of_range("irm: pose not on a world node");
  const std::uint64_t before = revision_;

  const auto& wn = world.node(at);
  IrmNode current{at, wn.position,
                  at == world.base() ? IrmNodeKind::Base : IrmNodeKind::Visited,
                  std::nullopt, std::nullopt, -1};
  auto it = nodes_.find(at);
  if (it == nodes_.end() || kind_rank(it->second.kind) < kind_rank(current.kind)) {
    add_node(current);
  }

  for (const auto& [nb, eidx] : world.neighbors(at)) {
    if (!has_node(nb)) {
      const auto& wnb = world.node(nb);
      add_node({nb, wnb.position, IrmNodeKind::Frontier, std::nullopt, std::nullopt, -1});
    }
    const WorldEdge& we = world.edges()[eidx];
    add_edge({at, nb, we.length / we.nominal_speed, 1.0 - we.risk});
  }
  return static_cast<int>(revision_ - before);
}

void Irm::annotate_checkpoint(NodeId id, double snr_db, CommsClass cls, std::int64_t stamp) {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw std::out_of_range("irm: annotate on unknown node");
  it->second.snr_db = snr_db;
  it->second.comms_class = cls;
  it->second.snr_stamp = stamp;
  ++revision_;
}

Irm Irm::extract_local(const Vec3& pose, NodeId current, double window_radius) const {
  if (!(window_radius > 0)) throw std::invalid_argument("irm: window_radius must be > 0");
  Irm out;
  for (const auto& [id, n] : nodes_) {
    if (id == current || distance(n.position, pose) <= window_radius) out.add_node(n);
  }
  for (const auto& e : edges_) {
    if (out.has_node(e.a) && out.has_node(e.b)) out.add_edge(e);
  }
  return out;
}

std::map<NodeId, double> Irm::travel_times_from(NodeId from) const {
  std::map<NodeId, double> dist;
  for (const auto& [id, n] : nodes_) dist[id] = std::numeric_limits<double>::infinity();
  if (!has_node(from)) return dist;
  using Item = std::pair<double, NodeId>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[from] = 0.0;
  pq.push({0.0, from});
  while (!pq.empty()) {
    const auto [d, u] = pq.top();
    pq.pop();
    if (d > dist[u]) continue;
    auto it = adjacency_.find(u);
    if (it == adjacency_.end()) continue;
    for (const auto& [v, eidx] : it->second) {
      const double nd = d + edges_[eidx].expected_time;
      if (nd < dist[v]) {
        dist[v] = nd;
        pq.push({nd, v});
      }
    }
  }
  return dist;
}

std::vector<NodeId> Irm::shortest_path(NodeId from, NodeId to) const {
  std::vector<NodeId> path;
  if (!has_node(from) || !has_node(to)) return path;
  std::map<NodeId, double> dist;
  std::map<NodeId, NodeId> parent;
  for (const auto& [id, n] : nodes_) dist[id] = std::numeric_limits<double>::infinity();
  using Item = std::pair<double, NodeId>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[from] = 0.0;
  pq.push({0.0, from});
  while (!pq.empty()) {
    const auto [d, u] = pq.top();
    pq.pop();
    if (d > dist[u]) continue;
    if (u == to) break;
    auto it = adjacency_.find(u);
    if (it == adjacency_.end()) continue;
    for (const auto& [v, eidx] : it->second) {
      const double nd = d + edges_[eidx].expected_time;
      if (nd < dist[v]) {
        dist[v] = nd;
        parent[v] = u;
        pq.push({nd, v});
      }
    }
  }
  if (!std::isfinite(dist[to])) return path;
  for (NodeId cur = to; cur != from; cur = parent.at(cur)) path.push_back(cur);
  path.push_back(from);
  std::reverse(path.begin(), path.end());
  return path;
}

void Irm::ensure_revision_at_least(std::uint64_t r) {
  if (revision_ < r) revision_ = r;
}

std::optional<NodeId> Irm::base_node() const {
  for (const auto& [id, n] : nodes_) {
    if (n.kind == IrmNodeKind::Base) return id;
  }
  return std::nullopt;
}

std::optional<NodeId> Irm::nearest_strong_checkpoint(NodeId from, bool toward_base,
                                                     std::optional<NodeId> current_target) const {
  // Candidates: Strong checkpoints plus Frontier nodes adjacent to one.
  std::vector<NodeId> candidates;
  for (const auto& [id, n] : nodes_) {
    if (n.comms_class == CommsClass::Strong) {
      candidates.push_back(id);
      continue;
    }
    if (n.kind == IrmNodeKind::Frontier) {
      for (NodeId nb : neighbors(id)) {
        if (node(nb).comms_class == CommsClass::Strong) {
          candidates.push_back(id);
          break;
        }
      }
    }
  }
  if (candidates.empty()) return std::nullopt;

  const auto dist = travel_times_from(from);

  std::map<NodeId, double> base_dist;
  if (toward_base) {
    const auto base = base_node();
    if (base) base_dist = travel_times_from(*base);
  }

  std::optional<NodeId> best;
  double best_time = std::numeric_limits<double>::infinity();
  for (NodeId c : candidates) {
    const double d = dist.at(c);
    if (!std::isfinite(d)) continue;
    if (toward_base && current_target && !base_dist.empty()) {
      if (!(base_dist.at(c) < base_dist.at(*current_target))) continue;
    }
    if (d < best_time || (d == best_time && (!best || c < *best))) {
      best_time = d;
      best = c;
    }
  }
  return best;
}

Irm Irm::merge(const Irm& a, const Irm& b, double merge_radius) {
  // Gather the union of nodes; duplicate ids contribute one entry per side.
  std::vector<std::pair<int, const IrmNode*>> all;  // (side, node)
  for (const auto& [id, n] : a.nodes_) all.emplace_back(0, &n);
  for (const auto& [id, n] : b.nodes_) all.emplace_back(1, &n);
  std::stable_sort(all.begin(), all.end(), [](const auto& x, const auto& y) {
    return x.second->id < y.second->id;
  });

  // Greedy proximity clustering against cluster representatives, in id
  // order; representative keeps the lowest id.
  struct Cluster {
    IrmNode rep;
  };
  std::vector<Cluster> clusters;
  std::map<std::pair<int, NodeId>, NodeId> remap;  // (side, id) -> representative id

  for (const auto& [side, n] : all) {
    int found = -1;
    for (std::size_t c = 0; c < clusters.size(); ++c) {
      if (distance(clusters[c].rep.position, n->position) <= merge_radius) {
        found = static_cast<int>(c);
        break;
      }
    }
    if (found < 0) {
      clusters.push_back({*n});
      remap[{side, n->id}] = n->id;
      continue;
    }
    IrmNode& rep = clusters[found].rep;
    remap[{side, n->id}] = rep.id;
    // Fold attributes: higher-information kind, newest snr annotation.
    if (kind_rank(n->kind) > kind_rank(rep.kind)) rep.kind = n->kind;
    if (n->snr_db) {
      const bool newer = !rep.snr_db || n->snr_stamp > rep.snr_stamp ||
                         (n->snr_stamp == rep.snr_stamp && *n->snr_db > *rep.snr_db);
      if (newer) {
        rep.snr_db = n->snr_db;
        rep.comms_class = n->comms_class;
        rep.snr_stamp = n->snr_stamp;
      }
    }
  }

  Irm out;
  for (const auto& c : clusters) out.add_node(c.rep);

  // Edges re-pointed at representatives; duplicates keep the optimistic
  // attributes (min time, max success) deterministically.
  std::map<std::pair<NodeId, NodeId>, IrmEdge> merged_edges;
  auto fold_edge = [&](const IrmEdge& e, int side) {
    const NodeId ra = remap.at({side, e.a});
    const NodeId rb = remap.at({side, e.b});
    if (ra == rb) return;
    const std::pair<NodeId, NodeId> key{std::min(ra, rb), std::max(ra, rb)};
    auto it = merged_edges.find(key);
    if (it == merged_edges.end()) {
      merged_edges[key] = {key.first, key.second, e.expected_time, e.success_prob};
    } else {
      it->second.expected_time = std::min(it->second.expected_time, e.expected_time);
      it->second.success_prob = std::max(it->second.success_prob, e.success_prob);
    }
  };
  for (const auto& e : a.edges_) fold_edge(e, 0);
  for (const auto& e : b.edges_) fold_edge(e, 1);
  for (const auto& [key, e] : merged_edges) out.add_edge(e);
  return out;
}

std::string Irm::to_jsonl() const {
  std::ostringstream os;
  for (const auto& [id, n] : nodes_) {
    nlohmann::json j;
    j["type"] = "node";
    j["id"] = id;
    j["pos"] = {n.position.x, n.position.y, n.position.z};
    j["kind"] = to_string(n.kind);
    if (n.snr_db) {
      j["snr_db"] = *n.snr_db;
      j["comms"] = to_string(*n.comms_class);
    }
    j["rev"] = revision_;
    os << j.dump() << '\n';
  }
  for (const auto& e : edges_) {
    nlohmann::json j;
    j["type"] = "edge";
    j["a"] = e.a;
    j["b"] = e.b;
    j["expected_time"] = e.expected_time;
    j["success_prob"] = e.success_prob;
    j["rev"] = revision_;
    os << j.dump() << '\n';
  }
  return os.str();
}

}  // namespace mrex
