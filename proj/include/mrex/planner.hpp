#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrex/irm.hpp"
#include "mrex/rng.hpp"
#include "mrex/world.hpp"

namespace mrex {

struct InvalidPathError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RewardParams {
  double gamma = 0.95;       // discount in (0,1]
  double lambda_cost = 0.05; // bits per second
  int horizon_steps = 10;    // T
  int replan_interval = 2;   // execute at most this many steps before replanning
};

// reward = gain - lambda * cost; the linear trade-off keeps the right
// monotonicities (more gain good, more cost bad).
double belief_reward(double info_gain_bits, double action_cost_s, const RewardParams& params);

// min(sensor_max, kappa * clearance): tighter coverage claims in confined
// space, full sensor range in the open.
double adaptive_coverage_radius(double clearance_at_pose_m, double sensor_max_m,
                                double kappa = 2.0);

enum class PolicyOrigin { Local, Global };

struct Policy {
  std::vector<NodeId> nodes;  // starts at the robot's node
  std::vector<double> step_gain_bits;
  std::vector<double> step_time_s;
  double utility = 0.0;       // U >= 0
  double success_prob = 1.0;  // product of edge success probabilities
  PolicyOrigin origin = PolicyOrigin::Local;
};

// Global guidance handed from the global planner to the local one: the
// first frontier of the global tour plus the corridor of nodes on the way.
struct GuidanceParam {
  NodeId target = -1;
  Vec3 target_position;
  std::vector<NodeId> corridor;
};

struct TourPrize {
  NodeId node = 0;
  double prize_bits = 0.0;  // expected entropy reduction when observed there
};

// Orienteering instance over [start, prizes...]; travel_time_s is indexed
// with 0 = start and 1+i = prizes[i].
struct TourInstance {
  NodeId start = 0;
  std::vector<TourPrize> prizes;
  std::vector<std::vector<double>> travel_time_s;
  double budget_s = 0.0;
};

struct TourBuildParams {
  double budget_s = 600.0;
  double local_window_m = 20.0;
  double sensor_max_m = 20.0;
  double kappa = 2.0;
  double eps_cov = 1e-6;
};

// Prizes at frontier nodes; pairwise action costs are metric (world-graph
// shortest path within the local window) when both endpoints are inside the
// window and topological (IRM shortest path) otherwise.
TourInstance build_tour_instance(const Irm& global_irm, const WorldGraph& world,
                                 const CoverageBelief& belief, NodeId pose,
                                 const TourBuildParams& params);

// Discounted-arrival objective sum_i gamma^(t_i) * g_i over the prize-index
// path; throws InvalidPathError on budget violation or a repeated prize.
double tour_score(const TourInstance& instance, std::span<const int> path, double gamma);

// Total travel seconds of the prize-index path, +inf if any leg is
// unreachable.
double tour_path_time(const TourInstance& instance, std::span<const int> path);

struct GlsParams {
  int iterations = 2000;
  double mu_factor = 0.3;  // mu = mu_factor * seed score / seed feature count
  int stall_limit = 1200;  // stop after this many iterations without a new incumbent
};

// Guided Local Search over {insert, remove, 2-opt, relocate} with edge
// features penalized at local optima. Never returns a path worse than the
// greedy construction; deterministic given the rng stream.
std::vector<int> gls_solve(const TourInstance& instance, double gamma, int iterations,
                           RngStream& rng, const GlsParams& params = {});

struct RolloutParams {
  int rollouts = 512;
  int depth = 10;
  double gamma = 0.95;
  double lambda_cost = 0.05;
  double guidance_weight = 0.15;  // bits per second of travel-time progress toward guidance
  double mix_greedy = 0.5;
  double mix_guidance = 0.3;
  double mix_random = 0.2;
  double sensor_max_m = 20.0;
  double kappa = 2.0;
  double eps_cov = 1e-6;
};

// Value of walking `path` (starting at path[0]) through the local view:
// discounted belief rewards with observation gains simulated on a scratch
// belief copy, plus the guidance-progress term. Shared by the planner and
// the exhaustive test oracle.
double rollout_path_value(const Irm& local_view, const WorldGraph& world,
                          const CoverageBelief& belief, std::span<const NodeId> path,
                          const GuidanceParam& guidance, const RolloutParams& params);

// Multi-heuristic rollout search: N depth-limited rollouts steered by
// {greedy gain, guidance descent, uniform random}, best rollout returned as
// the local policy. Deterministic given (snapshot, seed).
Policy rollout_plan(const Irm& local_view, const WorldGraph& world,
                    const CoverageBelief& belief, NodeId pose, const GuidanceParam& guidance,
                    const RolloutParams& params, RngStream& rng);

// Product of edge success probabilities along the policy.
double policy_success_prob(const Policy& policy, const Irm& irm);

// Eq-style risk-aware switch: argmax of success_prob * utility; ties keep
// the local policy.
const Policy& meta_select(const Policy& local, const Policy& global);

}  // namespace mrex
