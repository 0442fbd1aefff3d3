#include "mrex/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <set>

namespace mrex {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

double belief_reward(double info_gain_bits, double action_cost_s, const RewardParams& params) {
  if (info_gain_bits < 0 || action_cost_s < 0) {
    throw std::invalid_argument("belief_reward: gain and cost must be >= 0");
  }
  return info_gain_bits - params.lambda_cost * action_cost_s;
}

double adaptive_coverage_radius(double clearance_at_pose_m, double sensor_max_m, double kappa) {
  if (!(clearance_at_pose_m > 0) || !(sensor_max_m > 0)) {
    throw std::invalid_argument("adaptive_coverage_radius: inputs must be > 0");
  }
  return std::min(sensor_max_m, kappa * clearance_at_pose_m);
}

namespace {

// Dijkstra over the world graph restricted to nodes within the window.
std::map<NodeId, double> metric_times_from(const WorldGraph& world, NodeId from,
                                           const Vec3& center, double window_radius) {
  std::map<NodeId, double> dist;
  if (!world.has_node(from)) return dist;
  using Item = std::pair<double, NodeId>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[from] = 0.0;
  pq.push({0.0, from});
  while (!pq.empty()) {
    const auto [d, u] = pq.top();
    pq.pop();
    if (d > dist.at(u)) continue;
    for (const auto& [v, eidx] : world.neighbors(u)) {
      if (distance(world.node(v).position, center) > window_radius) continue;
      const WorldEdge& e = world.edges()[eidx];
      const double nd = d + e.length / e.nominal_speed;
      auto it = dist.find(v);
      if (it == dist.end() || nd < it->second) {
        dist[v] = nd;
        pq.push({nd, v});
      }
    }
  }
  return dist;
}

double peek_gain(const CoverageBelief& belief, const WorldGraph& world,
                 std::span<const std::size_t> candidate_indices, const Vec3& pose, double radius,
                 double eps_cov) {
  const double target = 1.0 - eps_cov;
  double gain = 0.0;
  for (std::size_t i : candidate_indices) {
    const double p = belief.covered_prob(i);
    if (p >= target) continue;
    if (distance(world.nodes()[i].position, pose) > radius) continue;
    gain += binary_entropy_bits(p) - binary_entropy_bits(target);
  }
  return gain;
}

double coverage_radius_at(const WorldGraph& world, NodeId node, double sensor_max, double kappa) {
  const double clearance = world.has_node(node) ? world.node(node).clearance : 1.0;
  return adaptive_coverage_radius(clearance, sensor_max, kappa);
}

}  // namespace

TourInstance build_tour_instance(const Irm& global_irm, const WorldGraph& world,
                                 const CoverageBelief& belief, NodeId pose,
                                 const TourBuildParams& params) {
  TourInstance instance;
  instance.start = pose;
  instance.budget_s = params.budget_s;

  const Vec3 center = global_irm.node(pose).position;

  for (const auto& [id, n] : global_irm.nodes()) {
    if (n.kind != IrmNodeKind::Frontier) continue;
    CoverageBelief scratch = belief;
    const double radius = coverage_radius_at(world, id, params.sensor_max_m, params.kappa);
    const double prize = scratch.apply_observation(world, n.position, radius, params.eps_cov);
    instance.prizes.push_back({id, prize});
  }

  std::vector<NodeId> members{pose};
  for (const auto& p : instance.prizes) members.push_back(p.node);
  const std::size_t m = members.size();

  std::vector<bool> in_window(m);
  for (std::size_t i = 0; i < m; ++i) {
    in_window[i] = distance(global_irm.node(members[i]).position, center) <= params.local_window_m;
  }

  instance.travel_time_s.assign(m, std::vector<double>(m, kInf));
  for (std::size_t i = 0; i < m; ++i) {
    const auto topo = global_irm.travel_times_from(members[i]);
    std::map<NodeId, double> metric;
    if (in_window[i]) metric = metric_times_from(world, members[i], center, params.local_window_m);
    for (std::size_t j = 0; j < m; ++j) {
      if (i == j) {
        instance.travel_time_s[i][j] = 0.0;
        continue;
      }
      double t = kInf;
      if (in_window[i] && in_window[j]) {
        auto it = metric.find(members[j]);
        if (it != metric.end()) t = it->second;
      }
      if (t == kInf) {
        auto it = topo.find(members[j]);
        if (it != topo.end()) t = it->second;
      }
      instance.travel_time_s[i][j] = t;
    }
  }
  return instance;
}

double tour_path_time(const TourInstance& instance, std::span<const int> path) {
  double t = 0.0;
  int prev = 0;
  for (int idx : path) {
    t += instance.travel_time_s[prev][idx + 1];
    prev = idx + 1;
  }
  return t;
}

double tour_score(const TourInstance& instance, std::span<const int> path, double gamma) {
  double t = 0.0;
  double score = 0.0;
  int prev = 0;
  std::set<int> seen;
  for (int idx : path) {
    if (idx < 0 || idx >= static_cast<int>(instance.prizes.size())) {
      throw InvalidPathError("tour_score: prize index out of range");
    }
    if (!seen.insert(idx).second) {
      throw InvalidPathError("tour_score: prize visited twice");
    }
    t += instance.travel_time_s[prev][idx + 1];
    if (!(t <= instance.budget_s + 1e-9)) {
      throw InvalidPathError("tour_score: path exceeds budget");
    }
    score += std::pow(gamma, t) * instance.prizes[idx].prize_bits;
    prev = idx + 1;
  }
  return score;
}

namespace {

struct GlsContext {
  const TourInstance& instance;
  double gamma;
  std::map<std::pair<int, int>, double> penalties;  // matrix-index edge -> count
  double mu = 0.0;

  double time_of(std::span<const int> path) const { return tour_path_time(instance, path); }

  bool feasible(std::span<const int> path) const {
    return time_of(path) <= instance.budget_s + 1e-9;
  }

  double true_score(std::span<const int> path) const {
    double t = 0.0, score = 0.0;
    int prev = 0;
    for (int idx : path) {
      t += instance.travel_time_s[prev][idx + 1];
      score += std::pow(gamma, t) * instance.prizes[idx].prize_bits;
      prev = idx + 1;
    }
    return score;
  }

  double penalty_sum(std::span<const int> path) const {
    double sum = 0.0;
    int prev = 0;
    for (int idx : path) {
      const std::pair<int, int> key{std::min(prev, idx + 1), std::max(prev, idx + 1)};
      auto it = penalties.find(key);
      if (it != penalties.end()) sum += it->second;
      prev = idx + 1;
    }
    return sum;
  }

  double augmented(std::span<const int> path) const {
    return true_score(path) - mu * penalty_sum(path);
  }

  void penalize_max_utility(std::span<const int> path) {
    int prev = 0;
    double best_util = -kInf;
    std::pair<int, int> best_edge{-1, -1};
    for (int idx : path) {
      const std::pair<int, int> key{std::min(prev, idx + 1), std::max(prev, idx + 1)};
      const double pen = penalties.count(key) ? penalties.at(key) : 0.0;
      const double util = instance.travel_time_s[key.first][key.second] / (1.0 + pen);
      if (util > best_util) {
        best_util = util;
        best_edge = key;
      }
      prev = idx + 1;
    }
    if (best_edge.first >= 0) penalties[best_edge] += 1.0;
  }
};

// Greedy prize insertion. With rcl_size > 1, each round picks uniformly
// among the top candidates, GRASP-style, to diversify restart seeds.
std::vector<int> greedy_seed(const TourInstance& instance, double gamma, RngStream* rng,
                             std::size_t rcl_size) {
  std::vector<int> path;
  std::vector<bool> used(instance.prizes.size(), false);
  GlsContext ctx{instance, gamma, {}, 0.0};
  struct Candidate {
    double delta;
    int prize;
    std::size_t pos;
  };
  while (true) {
    std::vector<Candidate> candidates;
    const double cur = ctx.true_score(path);
    for (int p = 0; p < static_cast<int>(instance.prizes.size()); ++p) {
      if (used[p] || instance.prizes[p].prize_bits <= 0) continue;
      Candidate best_for_prize{1e-12, -1, 0};
      for (std::size_t pos = 0; pos <= path.size(); ++pos) {
        std::vector<int> cand = path;
        cand.insert(cand.begin() + pos, p);
        if (!ctx.feasible(cand)) continue;
        const double delta = ctx.true_score(cand) - cur;
        if (delta > best_for_prize.delta) best_for_prize = {delta, p, pos};
      }
      if (best_for_prize.prize >= 0) candidates.push_back(best_for_prize);
    }
    if (candidates.empty()) break;
    std::sort(candidates.begin(), candidates.end(),
              [](const Candidate& a, const Candidate& b) { return a.delta > b.delta; });
    const std::size_t take =
        rng != nullptr ? rng->uniform_index(std::min(rcl_size, candidates.size())) : 0;
    path.insert(path.begin() + candidates[take].pos, candidates[take].prize);
    used[candidates[take].prize] = true;
  }
  return path;
}

}  // namespace

namespace {

// One guided-local-search improvement run from a seed path.
std::vector<int> gls_improve(const TourInstance& instance, double gamma,
                             std::vector<int> current, int iterations, RngStream& rng,
                             const GlsParams& params) {
  GlsContext ctx{instance, gamma, {}, 0.0};
  std::vector<int> best = current;
  double best_score = ctx.true_score(best);
  if (best_score <= 0.0) return best;

  const std::size_t seed_features = std::max<std::size_t>(1, current.size());
  ctx.mu = params.mu_factor * best_score / static_cast<double>(seed_features);

  std::vector<bool> used(instance.prizes.size(), false);
  for (int p : current) used[p] = true;

  int stall = 0;
  int penalize_rounds = 0;
  for (int iter = 0; iter < iterations && stall < params.stall_limit; ++iter) {
    const double cur_aug = ctx.augmented(current);
    double best_delta = 1e-12;
    std::vector<std::pair<std::vector<int>, int>> best_moves;  // (path, inserted prize or -1)

    auto consider = [&](std::vector<int>&& cand, int inserted) {
      if (!ctx.feasible(cand)) return;
      const double delta = ctx.augmented(cand) - cur_aug;
      if (delta > best_delta + 1e-12) {
        best_delta = delta;
        best_moves.clear();
        best_moves.emplace_back(std::move(cand), inserted);
      } else if (delta > best_delta - 1e-12 && !best_moves.empty()) {
        best_moves.emplace_back(std::move(cand), inserted);
      }
    };

    // insert
    for (int p = 0; p < static_cast<int>(instance.prizes.size()); ++p) {
      if (used[p] || instance.prizes[p].prize_bits <= 0) continue;
      for (std::size_t pos = 0; pos <= current.size(); ++pos) {
        std::vector<int> cand = current;
        cand.insert(cand.begin() + pos, p);
        consider(std::move(cand), p);
      }
    }
    // remove
    for (std::size_t pos = 0; pos < current.size(); ++pos) {
      std::vector<int> cand = current;
      cand.erase(cand.begin() + pos);
      consider(std::move(cand), -1);
    }
    // 2-opt segment reversal
    for (std::size_t i = 0; i + 1 < current.size(); ++i) {
      for (std::size_t j = i + 1; j < current.size(); ++j) {
        std::vector<int> cand = current;
        std::reverse(cand.begin() + i, cand.begin() + j + 1);
        consider(std::move(cand), -1);
      }
    }
    // relocate
    for (std::size_t i = 0; i < current.size(); ++i) {
      for (std::size_t j = 0; j < current.size(); ++j) {
        if (i == j) continue;
        std::vector<int> cand = current;
        const int v = cand[i];
        cand.erase(cand.begin() + i);
        cand.insert(cand.begin() + j, v);
        consider(std::move(cand), -1);
      }
    }

    if (!best_moves.empty()) {
      const std::size_t pick =
          best_moves.size() == 1 ? 0 : rng.uniform_index(best_moves.size());
      // Recompute membership from the chosen path.
      current = best_moves[pick].first;
      std::fill(used.begin(), used.end(), false);
      for (int p : current) used[p] = true;
      const double score = ctx.true_score(current);
      if (score > best_score + 1e-12) {
        best_score = score;
        best = current;
        stall = 0;
      } else {
        ++stall;
      }
    } else {
      // Local optimum of the augmented objective: penalize and continue.
      if (current.empty()) break;
      ctx.penalize_max_utility(current);
      ++stall;
      ++penalize_rounds;
      if (penalize_rounds % 60 == 0) {
        // Sustained penalization without progress: restart from the
        // incumbent with a random chunk removed and fresh penalties.
        current = best;
        const std::size_t removals = std::max<std::size_t>(1, current.size() / 3);
        for (std::size_t r = 0; r < removals && !current.empty(); ++r) {
          current.erase(current.begin() + rng.uniform_index(current.size()));
        }
        ctx.penalties.clear();
        std::fill(used.begin(), used.end(), false);
        for (int p : current) used[p] = true;
      }
    }
  }
  return best;
}

}  // namespace

std::vector<int> gls_solve(const TourInstance& instance, double gamma, int iterations,
                           RngStream& rng, const GlsParams& params) {
  if (iterations < 1) throw std::invalid_argument("gls_solve: iterations must be >= 1");
  if (instance.prizes.empty()) return {};

  // GRASP-style restarts: the first seed is the plain greedy construction,
  // later seeds randomize over near-best insertions to reach tour shapes a
  // single local-search basin cannot.
  const int restarts = std::clamp(iterations / 500, 1, 4);
  const int per_restart = iterations / restarts;

  GlsContext scorer{instance, gamma, {}, 0.0};
  std::vector<int> best;
  double best_score = 0.0;
  for (int s = 0; s < restarts; ++s) {
    std::vector<int> seed = s == 0 ? greedy_seed(instance, gamma, nullptr, 1)
                                   : greedy_seed(instance, gamma, &rng, 3);
    std::vector<int> got = gls_improve(instance, gamma, std::move(seed), per_restart, rng,
                                       params);
    const double score = scorer.true_score(got);
    if (score > best_score || (s == 0 && best.empty())) {
      best_score = score;
      best = std::move(got);
    }
  }
  return best;
}

namespace {

// Nodes whose coverage state any local-view observation can touch.
std::vector<std::size_t> reachable_belief_indices(const WorldGraph& world, const Irm& view,
                                                  const RolloutParams& params) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < world.node_count(); ++i) {
    const Vec3& p = world.nodes()[i].position;
    for (const auto& [id, n] : view.nodes()) {
      if (distance(p, n.position) <= params.sensor_max_m) {
        out.push_back(i);
        break;
      }
    }
  }
  return out;
}

struct GuidanceField {
  std::map<NodeId, double> travel;  // seconds to target over the view
  Vec3 target_position;
  bool has_travel = false;

  double at(const Irm& view, NodeId node) const {
    if (has_travel) {
      auto it = travel.find(node);
      if (it != travel.end() && std::isfinite(it->second)) return it->second;
    }
    // Fallback: straight-line estimate at 1 m/s.
    return distance(view.node(node).position, target_position);
  }
};

GuidanceField make_guidance_field(const Irm& view, const GuidanceParam& guidance) {
  GuidanceField f;
  f.target_position = guidance.target_position;
  if (guidance.target >= 0 && view.has_node(guidance.target)) {
    f.travel = view.travel_times_from(guidance.target);
    f.has_travel = true;
  }
  return f;
}

}  // namespace

double rollout_path_value(const Irm& local_view, const WorldGraph& world,
                          const CoverageBelief& belief, std::span<const NodeId> path,
                          const GuidanceParam& guidance, const RolloutParams& params) {
  if (path.empty()) return 0.0;
  CoverageBelief scratch = belief;
  const auto candidates = reachable_belief_indices(world, local_view, params);
  const GuidanceField field = make_guidance_field(local_view, guidance);
  const RewardParams reward_params{params.gamma, params.lambda_cost, params.depth, 1};

  double value = 0.0;
  double discount = 1.0;
  for (std::size_t k = 1; k < path.size(); ++k) {
    const IrmEdge* edge = local_view.edge_between(path[k - 1], path[k]);
    if (edge == nullptr) throw InvalidPathError("rollout path: nodes not adjacent in view");
    const double radius =
        coverage_radius_at(world, path[k], params.sensor_max_m, params.kappa);
    const Vec3 pose = local_view.node(path[k]).position;
    double gain = 0.0;
    const double target = 1.0 - params.eps_cov;
    for (std::size_t i : candidates) {
      const double p = scratch.covered_prob(i);
      if (p >= target) continue;
      if (distance(world.nodes()[i].position, pose) > radius) continue;
      gain += binary_entropy_bits(p) - binary_entropy_bits(target);
      scratch.set_covered_prob(i, target);
    }
    const double progress = field.at(local_view, path[k - 1]) - field.at(local_view, path[k]);
    value += discount * (belief_reward(gain, edge->expected_time, reward_params) +
                         params.guidance_weight * progress);
    discount *= params.gamma;
  }
  return value;
}

Policy rollout_plan(const Irm& local_view, const WorldGraph& world,
                    const CoverageBelief& belief, NodeId pose, const GuidanceParam& guidance,
                    const RolloutParams& params, RngStream& rng) {
  if (!local_view.has_node(pose)) throw std::invalid_argument("rollout_plan: pose not in view");

  const auto candidates = reachable_belief_indices(world, local_view, params);
  const GuidanceField field = make_guidance_field(local_view, guidance);
  const RewardParams reward_params{params.gamma, params.lambda_cost, params.depth, 1};
  const double target = 1.0 - params.eps_cov;

  std::set<NodeId> corridor(guidance.corridor.begin(), guidance.corridor.end());

  Policy best;
  best.origin = PolicyOrigin::Local;
  best.nodes = {pose};
  double best_value = 0.0;  // staying put is the zero-value fallback

  const auto start_succ = local_view.neighbors(pose);

  for (int r = 0; r < params.rollouts; ++r) {
    CoverageBelief scratch = belief;
    std::vector<NodeId> path{pose};
    std::vector<double> gains, times;
    double value = 0.0;
    double discount = 1.0;
    NodeId current = pose;

    // A quarter of the rollouts enumerate three-step prefixes (mixed-radix
    // counter over successor choices) so every departure direction gets
    // sampled even when no heuristic favors it.
    const bool stratified = !start_succ.empty() && r % 4 == 0;
    std::size_t prefix_counter = static_cast<std::size_t>(r) / 4;

    // Later rollouts exploit the incumbent: replay a random prefix of the
    // best path so far, mutate one step, then continue with the ensemble.
    std::size_t replay_len = 0;
    bool mutate_at_cut = false;
    if (!stratified && best_value > 0 && best.nodes.size() > 1 &&
        rng.bernoulli(0.2 + 0.5 * static_cast<double>(r) / params.rollouts)) {
      replay_len = rng.uniform_index(best.nodes.size());
      mutate_at_cut = rng.bernoulli(0.7);
    }

    for (int step = 0; step < params.depth; ++step) {
      const auto succ = local_view.neighbors(current);
      if (succ.empty()) break;

      NodeId chosen = succ.front();
      const bool replaying = static_cast<std::size_t>(step) + 1 < best.nodes.size() &&
                             static_cast<std::size_t>(step) < replay_len;
      if (stratified && step < 3) {
        chosen = succ[prefix_counter % succ.size()];
        prefix_counter /= succ.size();
      } else if (replaying &&
                 local_view.edge_between(current, best.nodes[step + 1]) != nullptr) {
        chosen = best.nodes[step + 1];
      } else if (mutate_at_cut && static_cast<std::size_t>(step) == replay_len &&
                 succ.size() > 1) {
        // Point mutation: deliberately leave the incumbent's track.
        const NodeId incumbent_next = static_cast<std::size_t>(step) + 1 < best.nodes.size()
                                          ? best.nodes[step + 1]
                                          : -1;
        do {
          chosen = succ[rng.uniform_index(succ.size())];
        } while (chosen == incumbent_next && succ.size() > 1);
      } else {
        const double h = rng.next_double01();
        if (h < params.mix_greedy) {
          double best_gain = -kInf;
          for (NodeId s : succ) {
            const double radius =
                coverage_radius_at(world, s, params.sensor_max_m, params.kappa);
            const double g = peek_gain(scratch, world, candidates,
                                       local_view.node(s).position, radius, params.eps_cov);
            if (g > best_gain) {
              best_gain = g;
              chosen = s;
            }
          }
        } else if (h < params.mix_greedy + params.mix_guidance) {
          double best_d = kInf;
          for (NodeId s : succ) {
            double d = field.at(local_view, s);
            if (corridor.count(s)) d -= 1e-6;  // prefer corridor members on ties
            if (d < best_d) {
              best_d = d;
              chosen = s;
            }
          }
        } else {
          chosen = succ[rng.uniform_index(succ.size())];
        }
      }

      const IrmEdge* edge = local_view.edge_between(current, chosen);
      const double radius = coverage_radius_at(world, chosen, params.sensor_max_m, params.kappa);
      const Vec3 cpose = local_view.node(chosen).position;
      double gain = 0.0;
      for (std::size_t i : candidates) {
        const double p = scratch.covered_prob(i);
        if (p >= target) continue;
        if (distance(world.nodes()[i].position, cpose) > radius) continue;
        gain += binary_entropy_bits(p) - binary_entropy_bits(target);
        scratch.set_covered_prob(i, target);
      }
      const double progress = field.at(local_view, current) - field.at(local_view, chosen);
      value += discount * (belief_reward(gain, edge->expected_time, reward_params) +
                           params.guidance_weight * progress);
      discount *= params.gamma;

      path.push_back(chosen);
      gains.push_back(gain);
      times.push_back(edge->expected_time);
      current = chosen;

      // A shorter prefix may dominate once nearby gain is exhausted and
      // further steps only cost time.
      if (value > best_value) {
        best_value = value;
        best.nodes = path;
        best.step_gain_bits = gains;
        best.step_time_s = times;
      }
    }
  }

  best.utility = std::max(0.0, best_value);
  best.success_prob = policy_success_prob(best, local_view);
  return best;
}

double policy_success_prob(const Policy& policy, const Irm& irm) {
  double p = 1.0;
  for (std::size_t i = 1; i < policy.nodes.size(); ++i) {
    const IrmEdge* edge = irm.edge_between(policy.nodes[i - 1], policy.nodes[i]);
    if (edge == nullptr) {
      throw InvalidPathError("policy_success_prob: edge missing from IRM");
    }
    p *= edge->success_prob;
  }
  return p;
}

const Policy& meta_select(const Policy& local, const Policy& global) {
  const double local_value = local.success_prob * local.utility;
  const double global_value = global.success_prob * global.utility;
  return local_value >= global_value ? local : global;
}

}  // namespace mrex
