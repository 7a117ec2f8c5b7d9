#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "frl/aggregators.hpp"
#include "frl/attacks.hpp"
#include "frl/ensemble.hpp"
#include "frl/envs.hpp"
#include "frl/fedcore.hpp"
#include "frl/policy.hpp"

namespace frl {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Raw `key = value` pairs, later keys overriding earlier ones.
using ConfigMap = std::map<std::string, std::string>;

// One `key = value` per line; `#` starts a comment; blank lines ignored.
ConfigMap parse_config_text(std::string_view text);
ConfigMap load_config_file(const std::filesystem::path& path);

struct ExperimentConfig {
  std::string env = "cartpole";
  std::size_t n_agents = 30;
  double malicious_fraction = 0.30;
  std::optional<std::vector<std::size_t>> malicious_ids;
  std::size_t k = 5;

  AggregatorSpec aggregator;
  std::optional<std::size_t> trim_c;  // default: ceil(fraction * group size)
  AttackSpec attack;

  std::size_t batch = 16;
  double lr = 1e-3;
  double gamma = 0.999;
  int horizon = 500;
  double baseline = 0.0;
  bool batch_mean_baseline = false;  // `baseline = batch_mean`
  bool discount_from_one = true;
  std::uint64_t trajectories_per_agent = 5000;
  std::uint64_t eval_interval = 250;
  std::size_t eval_episodes = 10;
  std::uint64_t seed = 0;
  ContinuousVote continuous_vote = ContinuousVote::geomedian;
  bool heterogeneous = false;
  double reward_noise_var = 0.0;  // agents' reward noise; 0.1 when heterogeneous and unset

  std::vector<std::size_t> hidden{16, 16};
  Activation activation = Activation::relu;
  bool raw_logits = false;
  std::size_t workers = 1;

  // Environment-dependent defaults are applied first, then every key in `map`.
  // Throws ConfigError on unknown keys, malformed values, or illegal combinations.
  static ExperimentConfig from_map(const ConfigMap& map);

  // Sorted `key=value` lines covering every field that affects results.
  std::string canonical() const;
  // FNV-1a 64 of canonical(), as 16 hex digits.
  std::string digest() const;

  void validate() const;

  TrainingSetup training_setup() const;
  AgentRoster roster() const;
  GroupAssignment assignment() const;
  std::vector<AggregatorSpec> group_aggregators(const GroupAssignment& a) const;
};

struct MetricsRecord {
  std::uint64_t trajectories = 0;  // per agent
  double reward = 0.0;
  std::vector<double> group_rewards;
  std::string config_digest;
  double wall_clock_seconds = 0.0;  // written to timing.jsonl only

  std::string to_json() const;
};

// Mean total reward over `episodes` noise-free episodes driven by the greedy
// member policy (K = 1) or the ensemble vote.
double evaluate_test_reward(const MlpPolicy& network, const EnsemblePolicy& ensemble,
                            const EnvConfig& env, std::size_t episodes, std::uint64_t seed);
double evaluate_test_reward(const MlpPolicy& network, std::span<const double> theta,
                            const EnvConfig& env, std::size_t episodes, std::uint64_t seed);

struct RunResult {
  std::vector<MetricsRecord> records;
  EnsemblePolicy final_policy;
  std::string run_digest;  // FNV-1a over every global policy after every round
  std::uint64_t server_trajectories = 0;
};

// Writes metrics.jsonl, summary.csv, rounds.jsonl, timing.jsonl, config.txt,
// run_digest.txt and checkpoints/ under `out_dir` when given.
RunResult run_experiment(const ExperimentConfig& config,
                         const std::optional<std::filesystem::path>& out_dir = {});

struct SweepPoint {
  std::string value;
  bool ok = false;
  std::string error;
  RunResult result;
};

// Axis names: malicious_fraction, n_agents (values `n` or `n:K`), K,
// delta_kind, variant, knowledge, attack_start, continuous_vote, heterogeneous.
std::vector<SweepPoint> run_sweep(const ConfigMap& base, std::string_view axis,
                                  const std::vector<std::string>& values,
                                  const std::optional<std::filesystem::path>& out_dir = {},
                                  std::size_t workers = 1);

struct CheckpointEval {
  double reward = 0.0;
  std::size_t k = 0;
  std::size_t round = 0;
};

CheckpointEval evaluate_checkpoint(const std::filesystem::path& dir, std::size_t episodes,
                                   std::uint64_t seed);

}  // namespace frl
