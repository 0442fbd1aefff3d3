#include "mrex/radio.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace mrex {

namespace {
constexpr double kSpeedOfLight = 299792458.0;
constexpr double kInf = std::numeric_limits<double>::infinity();
}  // namespace

double fspl_db(double distance_m, double frequency_hz) {
  return 20.0 * std::log10(distance_m) + 20.0 * std::log10(frequency_hz) +
         20.0 * std::log10(4.0 * std::numbers::pi / kSpeedOfLight);
}

double link_snr(const Vec3& a, const Vec3& b, double tx_power_dbm, const LinkModel& model,
                const OccupancyGrid* occupancy) {
  const double d = distance(a, b);
  double snr;
  if (d <= 0.0) {
    snr = model.max_snr_db;
  } else {
    const int walls = occupancy ? occupancy->count_walls(a, b) : 0;
    snr = tx_power_dbm - fspl_db(d, model.frequency_hz) - walls * model.wall_damping_db -
          model.noise_floor_dbm;
  }
  return std::min(snr, model.max_snr_db);
}

double capacity_bps(double snr_db, double bandwidth_hz) {
  if (!(bandwidth_hz > 0)) throw std::invalid_argument("capacity: bandwidth must be > 0");
  if (snr_db == -kInf) return 0.0;
  return bandwidth_hz * std::log2(1.0 + std::pow(10.0, snr_db / 10.0));
}

double predict_coverage_radius(double tx_power_dbm, const LinkModel& model,
                               double snr_threshold_db) {
  if (snr_threshold_db > model.max_snr_db) return 0.0;
  // tx - FSPL(d) - noise = thr  =>  20 log10 d = tx - noise - thr - K(f)
  const double k_f = 20.0 * std::log10(model.frequency_hz) +
                     20.0 * std::log10(4.0 * std::numbers::pi / kSpeedOfLight);
  const double rhs = tx_power_dbm - model.noise_floor_dbm - snr_threshold_db - k_f;
  return std::pow(10.0, rhs / 20.0);
}

std::vector<double> widest_path_from(const std::vector<std::vector<double>>& snr, int source,
                                     double floor_db, std::vector<int>* parent) {
  const std::size_t n = snr.size();
  std::vector<double> width(n, -kInf);
  if (parent) parent->assign(n, -1);
  if (n == 0) return width;
  width[source] = kInf;
  std::vector<char> done(n, 0);
  for (std::size_t iter = 0; iter < n; ++iter) {
    int u = -1;
    double best = -kInf;
    for (std::size_t i = 0; i < n; ++i) {
      if (!done[i] && width[i] > best) {
        best = width[i];
        u = static_cast<int>(i);
      }
    }
    if (u < 0 || width[u] == -kInf) break;
    done[u] = 1;
    for (std::size_t v = 0; v < n; ++v) {
      if (done[v] || static_cast<int>(v) == u) continue;
      const double link = snr[u][v];
      if (link < floor_db) continue;
      const double w = std::min(width[u], link);
      if (w > width[v]) {
        width[v] = w;
        if (parent) (*parent)[v] = u;
      }
    }
  }
  return width;
}

MeshState MeshState::build(std::vector<RadioNode> radios, const LinkModel& model,
                           const OccupancyGrid* occupancy, std::uint64_t revision) {
  MeshState mesh;
  mesh.radios_ = std::move(radios);
  mesh.model_ = model;
  mesh.revision_ = revision;

  int bases = 0;
  for (std::size_t i = 0; i < mesh.radios_.size(); ++i) {
    if (mesh.radios_[i].is_base) {
      ++bases;
      mesh.base_index_ = static_cast<int>(i);
      if (mesh.radios_[i].carried_by) {
        throw ValidationError("mesh: base radio cannot be carried");
      }
    }
  }
  if (bases != 1) throw ValidationError("mesh: exactly one base required");

  for (std::size_t i = 0; i < mesh.radios_.size(); ++i) {
    if (mesh.radios_[i].deployed()) mesh.routing_.push_back(static_cast<int>(i));
  }

  const std::size_t n = mesh.routing_.size();
  mesh.snr_.assign(n, std::vector<double>(n, -kInf));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const RadioNode& ri = mesh.radios_[mesh.routing_[i]];
      const RadioNode& rj = mesh.radios_[mesh.routing_[j]];
      // A usable link must close both ways; take the weaker transmitter.
      const double tx = std::min(ri.tx_power_dbm, rj.tx_power_dbm);
      const double s = link_snr(ri.position, rj.position, tx, model, occupancy);
      mesh.snr_[i][j] = s;
      mesh.snr_[j][i] = s;
    }
  }

  int base_routing = -1;
  for (std::size_t i = 0; i < n; ++i) {
    if (mesh.routing_[i] == mesh.base_index_) base_routing = static_cast<int>(i);
  }
  mesh.bottleneck_ = widest_path_from(mesh.snr_, base_routing, model.link_floor_db);
  return mesh;
}

double MeshState::link_snr_between(int i, int j) const {
  auto pos = [&](int idx) {
    const auto it = std::find(routing_.begin(), routing_.end(), idx);
    return it == routing_.end() ? -1 : static_cast<int>(it - routing_.begin());
  };
  const int pi = pos(i);
  const int pj = pos(j);
  if (pi < 0 || pj < 0) return -kInf;
  if (pi == pj) return model_.max_snr_db;
  return snr_[pi][pj];
}

std::optional<double> MeshState::bottleneck_to_base(int radio_index) const {
  for (std::size_t i = 0; i < routing_.size(); ++i) {
    if (routing_[i] == radio_index) {
      const double w = bottleneck_[i];
      if (w == -kInf) return std::nullopt;
      return w;
    }
  }
  return std::nullopt;
}

std::optional<double> MeshState::bottleneck_from_position(const Vec3& p, double tx_power_dbm,
                                                          const LinkModel& model,
                                                          const OccupancyGrid* occupancy,
                                                          int* first_hop_radio_id) const {
  const std::size_t n = routing_.size();
  // Augmented matrix: mesh nodes 0..n-1 plus the virtual receiver at n.
  std::vector<std::vector<double>> snr(n + 1, std::vector<double>(n + 1, -kInf));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) snr[i][j] = snr_[i][j];
  }
  int base_routing = -1;
  for (std::size_t i = 0; i < n; ++i) {
    const RadioNode& r = radios_[routing_[i]];
    const double tx = std::min(tx_power_dbm, r.tx_power_dbm);
    const double s = link_snr(p, r.position, tx, model, occupancy);
    snr[i][n] = s;
    snr[n][i] = s;
    if (routing_[i] == base_index_) base_routing = static_cast<int>(i);
  }
  std::vector<int> parent;
  const auto width = widest_path_from(snr, base_routing, model.link_floor_db, &parent);
  if (width[n] == -kInf) return std::nullopt;
  if (first_hop_radio_id) {
    // Walking up from the receiver, its parent is the first mesh node.
    const int hop = parent[n];
    *first_hop_radio_id = hop >= 0 ? radios_[routing_[hop]].radio_id : -1;
  }
  return width[n];
}

std::string MeshState::link_table_csv() const {
  std::ostringstream os;
  os << "radio_a,radio_b,snr_db\n";
  for (std::size_t i = 0; i < routing_.size(); ++i) {
    for (std::size_t j = i + 1; j < routing_.size(); ++j) {
      os << radios_[routing_[i]].radio_id << ',' << radios_[routing_[j]].radio_id << ','
         << snr_[i][j] << '\n';
    }
  }
  return os.str();
}

void update_checkpoints(Irm& irm, const MeshState& mesh, const LinkModel& model,
                        const OccupancyGrid* occupancy, std::int64_t stamp,
                        const CommsThresholds& thresholds) {
  // Receiver tx power mirrors the base radio (robot transceivers are
  // symmetric with mesh radios for prediction purposes).
  const double rx_tx = mesh.all_radios()[mesh.base_index()].tx_power_dbm;
  std::vector<std::pair<NodeId, double>> updates;
  for (const auto& [id, n] : irm.nodes()) {
    if (n.kind == IrmNodeKind::Frontier) continue;
    const auto snr = mesh.bottleneck_from_position(n.position, rx_tx, model, occupancy);
    updates.emplace_back(id, snr ? *snr : -kInf);
  }
  for (const auto& [id, snr] : updates) {
    irm.annotate_checkpoint(id, snr, classify_checkpoint(snr, thresholds), stamp);
  }
}

}  // namespace mrex
