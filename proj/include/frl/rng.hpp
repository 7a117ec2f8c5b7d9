#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace frl {

// Purpose tags mixed into derived seeds so that independent consumers never
// share a stream.
enum class Stream : std::uint64_t {
  init = 1,
  agent = 2,
  server = 3,
  attack = 4,
  eval = 5,
  flame = 6,
  probe = 7,
};

// SplitMix64 finalizer folded over the path components.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path);

inline std::uint64_t derive_seed(std::uint64_t master, Stream tag,
                                 std::initializer_list<std::uint64_t> path = {}) {
  std::uint64_t s = derive_seed(master, {static_cast<std::uint64_t>(tag)});
  return path.size() == 0 ? s : derive_seed(s, path);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal(double mean, double stddev) {
    if (stddev == 0.0) return mean;
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  // Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  // Number of Bernoulli(success) trials up to and including the first success.
  std::uint64_t trials_until_success(double success) {
    return std::geometric_distribution<std::uint64_t>(success)(engine_) + 1;
  }
  std::uint64_t next_u64() { return engine_(); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace frl
