#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

namespace mrex {

// xoshiro256** seeded via splitmix64. Self-contained so that streams are
// bit-identical across standard library implementations (std distributions
// are not portable).
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);

  std::uint64_t next_u64();
  // Uniform in [0,1) with 53 bits of mantissa.
  double next_double01();
  double uniform(double lo, double hi);
  bool bernoulli(double p);
  // Uniform in [0, n); n must be > 0.
  std::size_t uniform_index(std::size_t n);

 private:
  std::uint64_t s_[4];
};

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x00000100000001b3ull;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t& state);

// Derived seed is a pure function of (master_seed, stream name).
std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view name);

// Independent named streams; consuming one never perturbs another.
class RngStreams {
 public:
  explicit RngStreams(std::uint64_t master_seed) : master_seed_(master_seed) {}

  RngStream& stream(const std::string& name);

  RngStream& world() { return stream("world"); }
  RngStream& netloss() { return stream("netloss"); }
  RngStream& mission() { return stream("mission"); }
  RngStream& planner() { return stream("planner"); }

 private:
  std::uint64_t master_seed_;
  std::map<std::string, RngStream> streams_;
};

}  // namespace mrex
