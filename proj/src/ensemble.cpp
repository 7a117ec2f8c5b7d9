#include "frl/ensemble.hpp"

#include <algorithm>
#include <stdexcept>

#include "frl/parallel.hpp"

namespace frl {

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::vector<std::size_t>> GroupAssignment::members() const {
  std::vector<std::vector<std::size_t>> out(k);
  for (std::size_t id = 0; id < group_of.size(); ++id) out[group_of[id]].push_back(id);
  return out;
}

GroupAssignment assign_groups(std::span<const std::size_t> ids, std::size_t k) {
  if (k == 0) throw std::invalid_argument("group count must be >= 1");
  if (k > ids.size()) throw std::invalid_argument("more groups than agents");
  GroupAssignment a;
  a.k = k;
  const std::size_t max_id = *std::max_element(ids.begin(), ids.end());
  a.group_of.assign(max_id + 1, 0);
  for (std::size_t id : ids) a.group_of[id] = id % k;
  return a;
}

std::vector<std::size_t> assign_groups(std::span<const std::string> ids, std::size_t k) {
  if (k == 0) throw std::invalid_argument("group count must be >= 1");
  if (k > ids.size()) throw std::invalid_argument("more groups than agents");
  std::vector<std::size_t> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(static_cast<std::size_t>(fnv1a64(id) % k));
  return out;
}

ContinuousVote parse_continuous_vote(std::string_view key) {
  if (key == "geomedian") return ContinuousVote::geomedian;
  if (key == "fedavg") return ContinuousVote::fedavg;
  if (key == "trimmed_mean") return ContinuousVote::trimmed_mean;
  throw std::invalid_argument("unknown continuous_vote: " + std::string(key));
}

std::string continuous_vote_key(ContinuousVote v) {
  switch (v) {
    case ContinuousVote::geomedian: return "geomedian";
    case ContinuousVote::fedavg: return "fedavg";
    case ContinuousVote::trimmed_mean: return "trimmed_mean";
  }
  return "?";
}

std::vector<std::size_t> vote_counts(std::span<const std::size_t> actions, std::size_t count) {
  std::vector<std::size_t> v(count, 0);
  for (std::size_t a : actions) {
    if (a >= count) throw std::invalid_argument("action index out of range");
    ++v[a];
  }
  return v;
}

std::size_t vote_discrete(std::span<const std::size_t> actions, std::size_t count) {
  if (actions.empty()) throw std::invalid_argument("vote over zero actions");
  const auto v = vote_counts(actions, count);
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::vector<double> aggregate_continuous(std::span<const std::vector<double>> actions,
                                         const ActionSpace& space, ContinuousVote mode) {
  if (actions.empty()) throw std::invalid_argument("aggregation over zero actions");
  std::vector<double> out;
  switch (mode) {
    case ContinuousVote::geomedian:
      out = geometric_median(actions);
      break;
    case ContinuousVote::fedavg:
      out = fedavg(actions);
      break;
    case ContinuousVote::trimmed_mean:
      // One from each end when at least three actions are available.
      out = trimmed_mean(actions, actions.size() >= 3 ? 1 : 0);
      break;
  }
  for (double& v : out) v = std::clamp(v, space.lo, space.hi);
  return out;
}

Action ensemble_predict(const MlpPolicy& policy, const EnsemblePolicy& ensemble,
                        std::span<const double> s) {
  if (ensemble.members.empty()) throw std::invalid_argument("empty ensemble");
  const ActionSpace& space = ensemble.arch.actions;
  MlpPolicy::Scratch scratch;
  if (space.is_discrete()) {
    std::vector<std::size_t> actions;
    actions.reserve(ensemble.size());
    for (const auto& theta : ensemble.members)
      actions.push_back(std::get<std::size_t>(policy.greedy_from(policy.forward(theta, s, scratch))));
    return vote_discrete(actions, space.count);
  }
  std::vector<std::vector<double>> actions;
  actions.reserve(ensemble.size());
  for (const auto& theta : ensemble.members)
    actions.push_back(
        std::get<std::vector<double>>(policy.greedy_from(policy.forward(theta, s, scratch))));
  return aggregate_continuous(actions, space, ensemble.continuous_vote);
}

EnsembleTrainer::EnsembleTrainer(TrainingSetup setup, const AgentRoster& roster,
                                 GroupAssignment assignment,
                                 std::vector<AggregatorSpec> group_aggregators, AttackSpec attack,
                                 ContinuousVote continuous_vote)
    : setup_(std::move(setup)),
      network_(setup_.arch),
      assignment_(std::move(assignment)),
      aggregators_(std::move(group_aggregators)),
      attack_(attack) {
  if (aggregators_.size() != assignment_.k)
    throw std::invalid_argument("one aggregator spec per group required");
  groups_.resize(assignment_.k);
  for (const Agent& a : roster.agents) {
    if (a.id >= assignment_.group_of.size()) throw std::invalid_argument("agent without a group");
    groups_[assignment_.group_of[a.id]].push_back(a);
  }
  for (std::size_t g = 0; g < groups_.size(); ++g)
    if (groups_[g].empty()) throw std::invalid_argument("group " + std::to_string(g) + " is empty");

  Rng init(derive_seed(setup_.master_seed, Stream::init));
  const ParamVector theta0 = network_.init_params(init);
  ensemble_.arch = setup_.arch;
  ensemble_.members.assign(assignment_.k, theta0);
  ensemble_.continuous_vote = continuous_vote;
}

void EnsembleTrainer::run_round(const RoundSink& sink) {
  const std::size_t k = groups_.size();
  std::vector<RoundOutcome> outcomes(k);
  TrainingSetup inner = setup_;
  inner.workers = std::max<std::size_t>(1, setup_.workers / k);
  const RoundContext base{rounds_, 0, trajectories_per_agent()};
  parallel_for(k, std::min(k, setup_.workers), [&](std::size_t g) {
    RoundContext ctx = base;
    ctx.group = g;
    try {
      outcomes[g] = global_round(inner, network_, ensemble_.members[g], groups_[g],
                                 aggregators_[g], attack_, ctx);
    } catch (const std::exception& e) {
      throw std::runtime_error("group " + std::to_string(g) + ": " + e.what());
    }
  });
  for (std::size_t g = 0; g < k; ++g) {
    ensemble_.members[g] = std::move(outcomes[g].theta);
    server_trajectories_ += outcomes[g].record.server_trajectories;
    if (sink) sink(outcomes[g].record);
  }
  ++rounds_;
}

EnsemblePolicy train_ensemble(const TrainingSetup& setup, const AgentRoster& roster,
                              const GroupAssignment& assignment, const AggregatorSpec& aggregator,
                              const AttackSpec& attack, std::size_t rounds) {
  EnsembleTrainer trainer(setup, roster, assignment,
                          std::vector<AggregatorSpec>(assignment.k, aggregator), attack);
  for (std::size_t t = 0; t < rounds; ++t) trainer.run_round();
  return trainer.policy();
}

}  // namespace frl
