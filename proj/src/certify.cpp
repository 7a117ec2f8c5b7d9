#include "frl/certify.hpp"

#include <algorithm>
#include <functional>
#include <nlohmann/json.hpp>
#include <numeric>
#include <stdexcept>

#include "frl/aggregators.hpp"

namespace frl {

std::size_t VoteProfile::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

std::size_t VoteProfile::winner() const {
  if (counts.empty()) throw std::invalid_argument("empty vote profile");
  return static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

std::size_t VoteProfile::runner_up() const {
  if (counts.size() < 2) throw std::invalid_argument("runner-up needs >= 2 actions");
  const std::size_t x = winner();
  std::size_t y = x == 0 ? 1 : 0;
  for (std::size_t a = 0; a < counts.size(); ++a)
    if (a != x && counts[a] > counts[y]) y = a;
  return y;
}

DiscreteCertificate tolerance_discrete(const VoteProfile& profile) {
  if (profile.counts.size() < 2) throw std::invalid_argument("certificate needs >= 2 actions");
  DiscreteCertificate c;
  c.top = profile.winner();
  c.second = profile.runner_up();
  const long long margin = static_cast<long long>(profile.counts[c.top]) -
                           static_cast<long long>(profile.counts[c.second]) -
                           (c.second < c.top ? 1 : 0);
  if (margin < 0) {
    c.certified = false;
    c.tolerance = 0;
  } else {
    c.tolerance = static_cast<std::size_t>(margin / 2);
  }
  return c;
}

FlipOracleResult flip_oracle_discrete(const VoteProfile& profile, std::size_t corrupted) {
  const std::size_t m = profile.counts.size();
  const std::size_t x = profile.winner();
  const std::size_t budget = std::min(corrupted, profile.total());
  FlipOracleResult result;

  std::vector<std::size_t> removed(m, 0);
  std::vector<std::size_t> current = profile.counts;

  // Distribute `left` added votes over actions [a, m).
  std::function<void(std::size_t, std::size_t)> add = [&](std::size_t a, std::size_t left) {
    if (!result.holds) return;
    if (a + 1 == m) {
      current[a] += left;
      const VoteProfile p{current};
      if (p.winner() != x) {
        result.holds = false;
        result.worst_winner = p.winner();
        result.counterexample = p;
      }
      current[a] -= left;
      return;
    }
    for (std::size_t k = 0; k <= left; ++k) {
      current[a] += k;
      add(a + 1, left - k);
      current[a] -= k;
    }
  };

  // Choose how many votes to strip from each action.
  std::function<void(std::size_t, std::size_t)> strip = [&](std::size_t a, std::size_t taken) {
    if (!result.holds) return;
    if (a == m) {
      add(0, taken);
      return;
    }
    for (std::size_t k = 0; k <= profile.counts[a] && taken + k <= budget; ++k) {
      current[a] -= k;
      strip(a + 1, taken + k);
      current[a] += k;
    }
  };

  strip(0, 0);
  if (result.holds) result.worst_winner = x;
  return result;
}

double bound_continuous(std::size_t k, std::size_t n_prime, double w) {
  if (2 * n_prime >= k) throw std::invalid_argument("bound requires n' < K/2");
  if (w < 0.0) throw std::invalid_argument("bound requires w >= 0");
  const double kk = static_cast<double>(k);
  const double nn = static_cast<double>(n_prime);
  return 2.0 * w * (kk - nn) / (kk - 2.0 * nn);
}

DisplacementResult displacement_oracle_continuous(std::span<const ParamVector> points,
                                                  std::size_t n_prime, std::size_t trials,
                                                  Rng& rng) {
  const std::size_t k = points.size();
  if (2 * n_prime >= k) throw std::invalid_argument("oracle requires n' < K/2");
  DisplacementResult out;
  out.clean_median = geometric_median(points);
  for (const auto& p : points) out.w = std::max(out.w, distance(p, out.clean_median));
  if (n_prime == 0) return out;

  const std::size_t d = out.clean_median.size();
  std::vector<std::size_t> order(k);
  std::vector<ParamVector> corrupted(points.begin(), points.end());
  ParamVector direction(d);
  auto random_unit = [&] {
    double n = 0.0;
    while (n == 0.0) {
      for (double& v : direction) v = rng.normal(0.0, 1.0);
      n = norm(direction);
    }
    for (double& v : direction) v /= n;
  };

  for (std::size_t t = 0; t < trials; ++t) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng.engine());
    std::copy(points.begin(), points.end(), corrupted.begin());
    // Odd trials coordinate every corrupted point along one direction.
    const bool coordinated = t % 2 == 1;
    if (coordinated) random_unit();
    for (std::size_t i = 0; i < n_prime; ++i) {
      if (!coordinated) random_unit();
      const double magnitude = rng.uniform(0.0, 1e3 * out.w);
      ParamVector& p = corrupted[order[i]];
      for (std::size_t j = 0; j < d; ++j) p[j] = out.clean_median[j] + magnitude * direction[j];
    }
    const ParamVector moved = geometric_median(corrupted);
    out.max_displacement = std::max(out.max_displacement, distance(moved, out.clean_median));
  }
  return out;
}

std::string CertifiedBound::to_json() const {
  nlohmann::json j;
  if (kind == Kind::discrete_tolerance) {
    j["kind"] = "discrete_tolerance";
    j["votes"] = profile.counts;
    j["k"] = k;
    j["top_action"] = top;
    j["second_action"] = second;
    j["n_prime"] = n_prime;
    j["certified"] = certified;
  } else {
    j["kind"] = "continuous_displacement";
    j["k"] = k;
    j["n_prime"] = n_prime;
    j["w"] = w;
    j["bound"] = bound;
  }
  return j.dump();
}

CertifiedBound certify_discrete(const VoteProfile& profile) {
  const DiscreteCertificate c = tolerance_discrete(profile);
  CertifiedBound b;
  b.kind = CertifiedBound::Kind::discrete_tolerance;
  b.k = profile.total();
  b.n_prime = c.tolerance;
  b.profile = profile;
  b.top = c.top;
  b.second = c.second;
  b.certified = c.certified;
  return b;
}

CertifiedBound certify_continuous(std::size_t k, std::size_t n_prime, double w) {
  CertifiedBound b;
  b.kind = CertifiedBound::Kind::continuous_displacement;
  b.k = k;
  b.n_prime = n_prime;
  b.w = w;
  b.bound = bound_continuous(k, n_prime, w);
  return b;
}

}  // namespace frl
