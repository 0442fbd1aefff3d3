#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mrex/geometry.hpp"
#include "mrex/irm.hpp"
#include "mrex/world.hpp"

namespace mrex {

struct RadioNode {
  int radio_id = 0;
  Vec3 position;
  bool is_base = false;
  double tx_power_dbm = 20.0;
  std::optional<int> carried_by;  // mobile radios ride robots until dropped

  bool deployed() const { return !carried_by.has_value(); }
};

struct LinkModel {
  double frequency_hz = 2.4e9;
  double noise_floor_dbm = -90.0;
  double wall_damping_db = 8.0;  // per crossed occupied cell
  double bandwidth_hz = 1e6;
  double max_snr_db = 60.0;      // cap against the d->0 FSPL singularity
  double link_floor_db = -10.0;  // links below this are nonexistent for routing
};

// Friis free-space path loss, dB.
double fspl_db(double distance_m, double frequency_hz);

// SNR of the a->b link: tx - FSPL - walls*damping - noise_floor, capped at
// model.max_snr_db. Exactly symmetric in a and b.
double link_snr(const Vec3& a, const Vec3& b, double tx_power_dbm, const LinkModel& model,
                const OccupancyGrid* occupancy);

// Shannon capacity, bits/s. -inf SNR maps to 0.
double capacity_bps(double snr_db, double bandwidth_hz);

// Largest distance at which the free-space (zero-wall) SNR still meets the
// threshold; closed-form FSPL inversion, 0 when even d->0 falls short.
double predict_coverage_radius(double tx_power_dbm, const LinkModel& model,
                               double snr_threshold_db);

// Deployed mesh snapshot: pairwise link SNRs and per-radio bottleneck SNR to
// base. Carried radios are excluded from routing.
class MeshState {
 public:
  MeshState() = default;
  // `radios` may include carried radios; only deployed ones and the base
  // enter the link matrix. Exactly one base required.
  static MeshState build(std::vector<RadioNode> radios, const LinkModel& model,
                         const OccupancyGrid* occupancy, std::uint64_t revision);

  const std::vector<RadioNode>& all_radios() const { return radios_; }
  const std::vector<int>& routing_indices() const { return routing_; }
  int base_index() const { return base_index_; }  // index into all_radios
  std::uint64_t revision() const { return revision_; }

  // Symmetric SNR between two deployed radios (indices into all_radios);
  // -inf when either is carried or the link is below the floor.
  double link_snr_between(int i, int j) const;

  // Max over routes of (min link SNR along the route) to base; +inf for the
  // base itself, nullopt when no route above the link floor exists.
  std::optional<double> bottleneck_to_base(int radio_index) const;

  // Bottleneck SNR from base to a hypothetical receiver at `p` routed over
  // the deployed mesh. Optionally reports the first mesh node traffic from
  // `p` enters (radio_id; base id if direct).
  std::optional<double> bottleneck_from_position(const Vec3& p, double tx_power_dbm,
                                                 const LinkModel& model,
                                                 const OccupancyGrid* occupancy,
                                                 int* first_hop_radio_id = nullptr) const;

  std::string link_table_csv() const;

 private:
  std::vector<RadioNode> radios_;
  std::vector<int> routing_;  // indices of deployed radios + base
  int base_index_ = -1;
  std::vector<std::vector<double>> snr_;  // over routing_ positions
  std::vector<double> bottleneck_;        // over routing_ positions
  LinkModel model_;
  std::uint64_t revision_ = 0;

  friend std::vector<double> widest_path_from(const std::vector<std::vector<double>>& snr,
                                              int source, double floor_db,
                                              std::vector<int>* parent);
};

// Max-min (widest path) relaxation from `source` over a symmetric SNR
// matrix; entries below floor_db are no links. Returns per-node bottleneck
// (+inf at source, -inf unreachable); optional parent tree for routes.
std::vector<double> widest_path_from(const std::vector<std::vector<double>>& snr, int source,
                                     double floor_db, std::vector<int>* parent = nullptr);

// Refresh every potential checkpoint's SNR annotation from the deployed
// mesh: Visited/Base/Radio nodes get the bottleneck SNR a receiver at the
// node would see from base, and are reclassified.
void update_checkpoints(Irm& irm, const MeshState& mesh, const LinkModel& model,
                        const OccupancyGrid* occupancy, std::int64_t stamp,
                        const CommsThresholds& thresholds = {});

}  // namespace mrex
