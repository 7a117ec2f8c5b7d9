#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "frl/rng.hpp"
#include "frl/vecops.hpp"

namespace frl {

// Per-action vote counts, indexed by action; index order is the tie-break order.
struct VoteProfile {
  std::vector<std::size_t> counts;

  std::size_t total() const;
  // Highest count, ties to the smaller index.
  std::size_t winner() const;
  // Highest count among the other actions, ties to the smaller index.
  std::size_t runner_up() const;
};

struct DiscreteCertificate {
  std::size_t tolerance = 0;  // n'
  std::size_t top = 0;        // x
  std::size_t second = 0;     // y
  bool certified = true;      // false when the floor expression went negative
};

// n' = floor((v(x) - v(y) - [y < x]) / 2).
DiscreteCertificate tolerance_discrete(const VoteProfile& profile);

struct FlipOracleResult {
  bool holds = true;               // winner stays x under every corruption
  std::size_t worst_winner = 0;    // a winner != x when one exists
  VoteProfile counterexample;      // the corrupted profile that produced it
};

// Exhaustively reassigns up to `corrupted` votes to arbitrary actions.
FlipOracleResult flip_oracle_discrete(const VoteProfile& profile, std::size_t corrupted);

// 2 w (K - n') / (K - 2 n'). Throws std::invalid_argument unless 2 n' < K and w >= 0.
double bound_continuous(std::size_t k, std::size_t n_prime, double w);

struct DisplacementResult {
  double max_displacement = 0.0;
  double w = 0.0;  // max distance of a clean point from the clean geometric median
  ParamVector clean_median;
};

// Randomly replaces n' of the K points (random directions, magnitudes up to
// 1e3 * w around the clean median) and measures how far the geometric median moves.
DisplacementResult displacement_oracle_continuous(std::span<const ParamVector> points,
                                                  std::size_t n_prime, std::size_t trials,
                                                  Rng& rng);

struct CertifiedBound {
  enum class Kind { discrete_tolerance, continuous_displacement };
  Kind kind = Kind::discrete_tolerance;
  std::size_t k = 0;
  std::size_t n_prime = 0;
  double w = 0.0;
  double bound = 0.0;
  VoteProfile profile;
  std::size_t top = 0;
  std::size_t second = 0;
  bool certified = true;

  std::string to_json() const;
};

CertifiedBound certify_discrete(const VoteProfile& profile);
CertifiedBound certify_continuous(std::size_t k, std::size_t n_prime, double w);

}  // namespace frl
