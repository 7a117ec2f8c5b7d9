#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "frl/aggregators.hpp"
#include "frl/attacks.hpp"
#include "frl/envs.hpp"
#include "frl/fedcore.hpp"
#include "frl/policy.hpp"

namespace frl {

// Stable 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);

struct GroupAssignment {
  std::size_t k = 1;
  std::vector<std::size_t> group_of;  // indexed by agent id

  std::vector<std::vector<std::size_t>> members() const;
};

// group(id) = id mod K. Throws when K == 0 or K > number of ids.
GroupAssignment assign_groups(std::span<const std::size_t> ids, std::size_t k);
// group(id) = fnv1a64(id) mod K, for string identities.
std::vector<std::size_t> assign_groups(std::span<const std::string> ids, std::size_t k);

enum class ContinuousVote { geomedian, fedavg, trimmed_mean };

ContinuousVote parse_continuous_vote(std::string_view key);
std::string continuous_vote_key(ContinuousVote v);

struct EnsemblePolicy {
  ArchSpec arch;
  std::vector<ParamVector> members;  // one global policy per group
  ContinuousVote continuous_vote = ContinuousVote::geomedian;

  std::size_t size() const { return members.size(); }
};

// Per-action frequencies over `count` actions.
std::vector<std::size_t> vote_counts(std::span<const std::size_t> actions, std::size_t count);
// Highest frequency; ties go to the smaller index.
std::size_t vote_discrete(std::span<const std::size_t> actions, std::size_t count);

std::vector<double> aggregate_continuous(std::span<const std::vector<double>> actions,
                                         const ActionSpace& space,
                                         ContinuousVote mode = ContinuousVote::geomedian);

Action ensemble_predict(const MlpPolicy& policy, const EnsemblePolicy& ensemble,
                        std::span<const double> s);

// Trains K isolated federations in lock step; group k only ever sees its own
// agents and its own global policy.
class EnsembleTrainer {
 public:
  using RoundSink = std::function<void(const RoundRecord&)>;

  EnsembleTrainer(TrainingSetup setup, const AgentRoster& roster, GroupAssignment assignment,
                  std::vector<AggregatorSpec> group_aggregators, AttackSpec attack,
                  ContinuousVote continuous_vote = ContinuousVote::geomedian);

  // Advances every group by one global round.
  void run_round(const RoundSink& sink = {});

  std::size_t rounds_completed() const { return rounds_; }
  std::uint64_t trajectories_per_agent() const { return rounds_ * setup_.batch; }
  std::uint64_t server_trajectories() const { return server_trajectories_; }
  const EnsemblePolicy& policy() const { return ensemble_; }
  const MlpPolicy& network() const { return network_; }
  const GroupAssignment& assignment() const { return assignment_; }

 private:
  TrainingSetup setup_;
  MlpPolicy network_;
  GroupAssignment assignment_;
  std::vector<std::vector<Agent>> groups_;
  std::vector<AggregatorSpec> aggregators_;
  AttackSpec attack_;
  EnsemblePolicy ensemble_;
  std::size_t rounds_ = 0;
  std::uint64_t server_trajectories_ = 0;
};

// Runs `rounds` rounds of EnsembleTrainer from a common initial policy.
EnsemblePolicy train_ensemble(const TrainingSetup& setup, const AgentRoster& roster,
                              const GroupAssignment& assignment, const AggregatorSpec& aggregator,
                              const AttackSpec& attack, std::size_t rounds);

}  // namespace frl
