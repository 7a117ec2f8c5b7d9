#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "frl/rng.hpp"
#include "frl/vecops.hpp"

namespace frl {

enum class AggregatorKind { fedavg, trimmed_mean, coord_median, geometric_median, flame, fedpg_br };

AggregatorKind parse_aggregator(std::string_view key);
std::string aggregator_key(AggregatorKind kind);

struct AggregatorSpec {
  AggregatorKind kind = AggregatorKind::fedavg;
  std::size_t trim_c = 0;
  double flame_lambda = 0.001;
  std::size_t fedpg_b = 4;
  double fedpg_sigma = 0.06;
  double fedpg_delta = 0.6;
  // SCSG anchor term: true differentiates at theta_0 along the trajectories
  // drawn at theta_j; false draws fresh trajectories at theta_0 with the same seeds.
  bool fedpg_reuse = false;
  double gm_eps = 1e-8;
  std::size_t gm_max_iters = 500;

  // Throws std::invalid_argument when the parameters are illegal for n inputs.
  void validate(std::size_t n) const;
};

ParamVector fedavg(std::span<const ParamVector> updates);
ParamVector trimmed_mean(std::span<const ParamVector> updates, std::size_t c);
ParamVector coord_median(std::span<const ParamVector> updates);

// Weiszfeld iteration started from the coordinate-wise mean, with the
// Vardi-Zhang correction when an iterate coincides with a data point.
ParamVector geometric_median(std::span<const ParamVector> points, double eps = 1e-8,
                             std::size_t max_iters = 500);

// Sum of Euclidean distances from z to every point.
double geometric_median_objective(std::span<const ParamVector> points, std::span<const double> z);

struct FlameOutcome {
  ParamVector aggregate;
  std::vector<std::size_t> kept;  // indices into the input
  double clip_norm = 0.0;
  bool fallback_all = false;
};

FlameOutcome flame(std::span<const ParamVector> updates, double noise_lambda, Rng& rng);

// Server-side policy-gradient estimate from `b` trajectories rolled out at
// `sample_at`, differentiated at `grad_at`; equal seeds must reproduce equal
// trajectory randomness.
using GradientEstimator = std::function<ParamVector(
    std::span<const double> sample_at, std::span<const double> grad_at, std::uint64_t seed)>;

struct FedPgBrOutcome {
  ParamVector applied;  // (theta_N - theta) / lr
  ParamVector median;
  std::vector<std::size_t> kept;
  std::uint64_t inner_steps = 0;
  std::size_t server_trajectories = 0;
};

// Inlier filter: within 2*sigma of the geometric median and non-negative inner
// product with it.
std::vector<std::size_t> fedpg_br_filter(std::span<const ParamVector> updates,
                                         std::span<const double> median, double sigma);

FedPgBrOutcome fedpg_br(std::span<const ParamVector> updates, std::span<const double> theta,
                        const AggregatorSpec& spec, double lr, std::size_t batch_size,
                        const GradientEstimator& server_gradient, Rng& rng);

// Same with the SCSG inner-loop length fixed instead of drawn.
FedPgBrOutcome fedpg_br_steps(std::span<const ParamVector> updates, std::span<const double> theta,
                              const AggregatorSpec& spec, double lr,
                              const GradientEstimator& server_gradient, std::uint64_t inner_steps,
                              Rng& rng);

// Everything beyond the update multiset that a rule may consume.
struct AggregationContext {
  std::span<const double> theta;
  double lr = 0.0;
  std::size_t batch_size = 1;
  const GradientEstimator* server_gradient = nullptr;  // fedpg_br only
  std::uint64_t seed = 0;                              // flame noise / fedpg_br sampling
};

struct AggregationStats {
  std::size_t kept = 0;
  std::size_t server_trajectories = 0;
  bool fallback = false;
};

// A deterministic function of (spec, updates, ctx).
ParamVector aggregate(const AggregatorSpec& spec, std::span<const ParamVector> updates,
                      const AggregationContext& ctx, AggregationStats* stats = nullptr);

}  // namespace frl
