#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "mrex/planner.hpp"
#include "mrex/radio.hpp"
#include "mrex/rng.hpp"
#include "oracles.hpp"

namespace {

int oracle_tour(std::uint64_t seed, int count) {
  mrex::RngStream rng(seed);
  double ratio_sum = 0;
  double worst = 1.0;
  for (int i = 0; i < count; ++i) {
    const auto instance = mrex::oracles::random_tour_instance(rng, 8, 100.0, 180.0);
    const auto optimum = mrex::oracles::brute_force_tour(instance, 0.99);
    mrex::RngStream solver_rng(seed + 1000 + i);
    const auto path = mrex::gls_solve(instance, 0.99, 2000, solver_rng);
    const double score = mrex::tour_score(instance, path, 0.99);
    const double ratio = optimum.score > 0 ? score / optimum.score : 1.0;
    ratio_sum += ratio;
    worst = std::min(worst, ratio);
  }
  std::cout << "tour: instances=" << count << " mean_ratio=" << ratio_sum / count
            << " worst_ratio=" << worst << '\n';
  return 0;
}

int oracle_widest(std::uint64_t seed, int count) {
  mrex::RngStream rng(seed);
  int mismatches = 0;
  for (int i = 0; i < count; ++i) {
    const int n = 3 + static_cast<int>(rng.uniform_index(5));
    std::vector<std::vector<double>> snr(n, std::vector<double>(n, -1e18));
    for (int a = 0; a < n; ++a) {
      for (int b = a + 1; b < n; ++b) {
        if (rng.bernoulli(0.7)) {
          const double s = rng.uniform(-15.0, 50.0);
          snr[a][b] = s;
          snr[b][a] = s;
        }
      }
    }
    const auto fast = mrex::widest_path_from(snr, 0, -10.0);
    const auto slow = mrex::oracles::brute_force_widest(snr, 0, -10.0);
    for (int v = 0; v < n; ++v) {
      if (std::isfinite(fast[v]) != std::isfinite(slow[v]) ||
          (std::isfinite(fast[v]) && std::abs(fast[v] - slow[v]) > 1e-9)) {
        ++mismatches;
      }
    }
  }
  std::cout << "widest: meshes=" << count << " mismatches=" << mismatches << '\n';
  return mismatches == 0 ? 0 : 3;
}

int oracle_entropy(std::uint64_t seed, int count) {
  mrex::RngStream rng(seed);
  double max_err = 0;
  for (int i = 0; i < count; ++i) {
    std::vector<mrex::WorldNode> nodes;
    const int n = 10 + static_cast<int>(rng.uniform_index(20));
    std::vector<mrex::WorldEdge> edges;
    for (int k = 0; k < n; ++k) {
      nodes.push_back({k, {rng.uniform(0, 50), rng.uniform(0, 50), 0}, 1.0});
      if (k > 0) edges.push_back({k - 1, k, 1.0, 1.0, 0.0});
    }
    mrex::WorldGraph world(nodes, edges, 0);
    mrex::CoverageBelief belief(world.node_count(), 0.5);
    const double before = belief.entropy_bits();
    double gains = 0;
    for (int obs = 0; obs < 5; ++obs) {
      gains += belief.apply_observation(
          world, {rng.uniform(0, 50), rng.uniform(0, 50), 0}, rng.uniform(5, 25), 1e-6);
    }
    max_err = std::max(max_err, std::abs(gains - (before - belief.entropy_bits())));
  }
  std::cout << "entropy: runs=" << count << " max_bookkeeping_error=" << max_err << '\n';
  return max_err < 1e-9 ? 0 : 3;
}

}  // namespace

int cmd_oracle(const std::string& name, std::uint64_t seed, int count) {
  if (name == "tour") return oracle_tour(seed, count);
  if (name == "widest") return oracle_widest(seed, count);
  if (name == "entropy") return oracle_entropy(seed, count);
  std::cerr << "unknown oracle '" << name << "' (tour | widest | entropy)\n";
  return 2;
}
