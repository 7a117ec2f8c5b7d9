#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "frl/aggregators.hpp"
#include "frl/attacks.hpp"
#include "frl/envs.hpp"
#include "frl/policy.hpp"
#include "frl/rng.hpp"

namespace frl {

struct TrajectoryStep {
  std::array<double, EnvConfig::kObservationDim> state{};
  Action action;
  double reward = 0.0;
};

// Ends at episode termination or after `horizon` steps.
struct Trajectory {
  std::vector<TrajectoryStep> steps;
  double total_reward() const;
};

// Discount applied to the h-th reward (h counted from 1): gamma^h when
// `from_one`, gamma^(h-1) otherwise.
struct ReturnSpec {
  double gamma = 0.999;
  double baseline = 0.0;
  bool from_one = true;
  // Replaces `baseline` with the mean discounted return of the batch.
  bool batch_mean_baseline = false;
};

// Discounted return and summed log-probability gradient of one episode.
struct TrajectoryScore {
  double ret = 0.0;
  ParamVector score;
};

// (1/B) sum_k score_k * (ret_k - baseline).
ParamVector combine_scores(std::span<const TrajectoryScore> scores, const ReturnSpec& returns);

// Behaviour override for data-poisoning agents.
enum class Behaviour { policy, uniform_random };

std::vector<Trajectory> sample_batch(const MlpPolicy& policy, std::span<const double> theta,
                                     const EnvConfig& env, std::size_t batch, int horizon, Rng& rng,
                                     Behaviour behaviour = Behaviour::policy);

// (1/B) sum_k [sum_h grad log pi(a|s)] * [sum_h discount_h * r_h - baseline].
ParamVector reinforce_update(const MlpPolicy& policy, std::span<const double> theta,
                             std::span<const Trajectory> trajectories, const ReturnSpec& returns);

// Samples and differentiates in one pass without storing trajectories.
// Bitwise equal to reinforce_update(sample_batch(...)) for the same rng.
ParamVector policy_gradient(const MlpPolicy& policy, std::span<const double> theta,
                            const EnvConfig& env, std::size_t batch, int horizon,
                            const ReturnSpec& returns, Rng& rng,
                            Behaviour behaviour = Behaviour::policy);

// Rolls one episode out at `theta` and differentiates log-probabilities at `grad_at`.
TrajectoryScore score_rollout(const MlpPolicy& policy, std::span<const double> theta,
                              std::span<const double> grad_at, const EnvConfig& env, int horizon,
                              const ReturnSpec& returns, Rng& rng,
                              Behaviour behaviour = Behaviour::policy);

Action uniform_random_action(const ActionSpace& space, Rng& rng);

struct Agent {
  std::size_t id = 0;
  bool malicious = false;
};

struct AgentRoster {
  std::vector<Agent> agents;

  // ceil(fraction * n) malicious agents; the lowest ids unless
  // `malicious_ids` is given.
  static AgentRoster make(std::size_t n, double fraction,
                          const std::optional<std::vector<std::size_t>>& malicious_ids = {});
  std::size_t malicious_count() const;
};

std::size_t malicious_quota(std::size_t n, double fraction);

// Shared, round-invariant training settings.
struct TrainingSetup {
  EnvConfig env;        // evaluation / server environment (noise-free)
  EnvConfig agent_env;  // agents' environment, possibly with reward noise
  ArchSpec arch;
  std::size_t batch = 16;
  int horizon = 500;
  ReturnSpec returns;
  double lr = 1e-3;
  std::uint64_t master_seed = 0;
  std::size_t workers = 1;
};

struct RoundContext {
  std::size_t round = 0;
  std::size_t group = 0;
  // Trajectories each agent had sampled before this round.
  std::uint64_t trajectories_before = 0;
};

struct RoundRecord {
  std::size_t round = 0;
  std::size_t group = 0;
  std::uint64_t trajectories_sampled_total = 0;  // cumulative over this server's agents
  std::uint64_t server_trajectories = 0;         // this round, tracked separately
  std::vector<double> per_agent_update_norms;    // id order
  double aggregated_norm = 0.0;
  bool attack_active = false;

  std::string to_json() const;
};

struct RoundOutcome {
  ParamVector theta;
  RoundRecord record;
};

// One synchronize / local update / aggregate round over `agents`.
// Throws std::runtime_error naming the round on aggregation faults.
RoundOutcome global_round(const TrainingSetup& setup, const MlpPolicy& policy,
                          std::span<const double> theta, std::span<const Agent> agents,
                          const AggregatorSpec& aggregator, const AttackSpec& attack,
                          const RoundContext& ctx);

// Aggregator as seen by attack probes: fixed probe seed for the randomized
// rules, trim parameter clamped to the probe set size.
AggregatorOracle make_probe_oracle(const AggregatorSpec& spec, const TrainingSetup& setup,
                                   const MlpPolicy& policy, std::span<const double> theta,
                                   std::uint64_t probe_seed);

GradientEstimator make_server_estimator(const TrainingSetup& setup, const MlpPolicy& policy,
                                        std::size_t server_batch);

}  // namespace frl
