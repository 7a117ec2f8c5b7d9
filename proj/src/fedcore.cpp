#include "frl/fedcore.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "frl/parallel.hpp"

namespace frl {

double Trajectory::total_reward() const {
  double s = 0.0;
  for (const auto& st : steps) s += st.reward;
  return s;
}

Action uniform_random_action(const ActionSpace& space, Rng& rng) {
  if (space.is_discrete()) return rng.index(space.count);
  std::vector<double> a(space.dim);
  for (double& v : a) v = rng.uniform(space.lo, space.hi);
  return a;
}

std::vector<Trajectory> sample_batch(const MlpPolicy& policy, std::span<const double> theta,
                                     const EnvConfig& env, std::size_t batch, int horizon, Rng& rng,
                                     Behaviour behaviour) {
  if (batch == 0) throw std::invalid_argument("batch size must be >= 1");
  std::vector<Trajectory> out(batch);
  MlpPolicy::Scratch scratch;
  const ActionSpace space = env.action_space();
  for (Trajectory& traj : out) {
    EnvState s = reset(env, rng);
    bool done = false;
    while (!done && static_cast<int>(traj.steps.size()) < horizon) {
      TrajectoryStep st;
      st.state = s.observation();
      const ActionDistribution& dist = policy.forward(theta, st.state, scratch);
      st.action = behaviour == Behaviour::policy ? policy.sample_from(dist, rng)
                                                 : uniform_random_action(space, rng);
      const StepResult r = step(env, s, st.action, &rng);
      st.reward = r.reward;
      traj.steps.push_back(std::move(st));
      s = r.next;
      done = r.done;
    }
  }
  return out;
}

namespace {

double step_discount(const ReturnSpec& returns) { return returns.from_one ? returns.gamma : 1.0; }

}  // namespace

ParamVector combine_scores(std::span<const TrajectoryScore> scores, const ReturnSpec& returns) {
  if (scores.empty()) throw std::invalid_argument("policy update needs >= 1 trajectory");
  double baseline = returns.baseline;
  if (returns.batch_mean_baseline) {
    baseline = 0.0;
    for (const auto& sc : scores) baseline += sc.ret;
    baseline /= static_cast<double>(scores.size());
  }
  ParamVector out(scores.front().score.size(), 0.0);
  for (const auto& sc : scores) axpy(sc.ret - baseline, sc.score, out);
  for (double& v : out) v /= static_cast<double>(scores.size());
  if (!all_finite(out)) throw NumericFault("non-finite policy update");
  return out;
}

ParamVector reinforce_update(const MlpPolicy& policy, std::span<const double> theta,
                             std::span<const Trajectory> trajectories, const ReturnSpec& returns) {
  if (trajectories.empty()) throw std::invalid_argument("reinforce_update needs >= 1 trajectory");
  std::vector<TrajectoryScore> scores(trajectories.size());
  MlpPolicy::Scratch scratch;
  for (std::size_t k = 0; k < trajectories.size(); ++k) {
    TrajectoryScore& sc = scores[k];
    sc.score.assign(policy.param_count(), 0.0);
    double discount = step_discount(returns);
    for (const TrajectoryStep& st : trajectories[k].steps) {
      policy.forward(theta, st.state, scratch);
      policy.accumulate_logprob_grad(theta, st.action, 1.0, sc.score, scratch);
      sc.ret += discount * st.reward;
      discount *= returns.gamma;
    }
  }
  return combine_scores(scores, returns);
}

TrajectoryScore score_rollout(const MlpPolicy& policy, std::span<const double> theta,
                              std::span<const double> grad_at, const EnvConfig& env, int horizon,
                              const ReturnSpec& returns, Rng& rng, Behaviour behaviour) {
  const bool same = theta.data() == grad_at.data() ||
                    std::equal(theta.begin(), theta.end(), grad_at.begin(), grad_at.end());
  TrajectoryScore sc;
  sc.score.assign(policy.param_count(), 0.0);
  MlpPolicy::Scratch scratch, grad_scratch;
  const ActionSpace space = env.action_space();
  double discount = step_discount(returns);
  EnvState s = reset(env, rng);
  bool done = false;
  for (int h = 0; !done && h < horizon; ++h) {
    const auto obs = s.observation();
    const ActionDistribution& dist = policy.forward(theta, obs, scratch);
    const Action a = behaviour == Behaviour::policy ? policy.sample_from(dist, rng)
                                                    : uniform_random_action(space, rng);
    const StepResult r = step(env, s, a, &rng);
    if (same) {
      policy.accumulate_logprob_grad(theta, a, 1.0, sc.score, scratch);
    } else {
      policy.forward(grad_at, obs, grad_scratch);
      policy.accumulate_logprob_grad(grad_at, a, 1.0, sc.score, grad_scratch);
    }
    sc.ret += discount * r.reward;
    discount *= returns.gamma;
    s = r.next;
    done = r.done;
  }
  return sc;
}

ParamVector policy_gradient(const MlpPolicy& policy, std::span<const double> theta,
                            const EnvConfig& env, std::size_t batch, int horizon,
                            const ReturnSpec& returns, Rng& rng, Behaviour behaviour) {
  if (batch == 0) throw std::invalid_argument("batch size must be >= 1");
  std::vector<TrajectoryScore> scores;
  scores.reserve(batch);
  for (std::size_t k = 0; k < batch; ++k)
    scores.push_back(score_rollout(policy, theta, theta, env, horizon, returns, rng, behaviour));
  return combine_scores(scores, returns);
}

std::size_t malicious_quota(std::size_t n, double fraction) {
  if (fraction < 0.0 || fraction > 1.0) throw std::invalid_argument("fraction must be in [0,1]");
  // Guard against 0.3 * 30 = 9.000000000000002.
  const double raw = fraction * static_cast<double>(n);
  return std::min(n, static_cast<std::size_t>(std::ceil(raw - 1e-9)));
}

AgentRoster AgentRoster::make(std::size_t n, double fraction,
                              const std::optional<std::vector<std::size_t>>& malicious_ids) {
  AgentRoster roster;
  roster.agents.resize(n);
  for (std::size_t i = 0; i < n; ++i) roster.agents[i].id = i;
  if (malicious_ids) {
    for (std::size_t id : *malicious_ids) {
      if (id >= n) throw std::invalid_argument("malicious id out of range");
      roster.agents[id].malicious = true;
    }
  } else {
    const std::size_t m = malicious_quota(n, fraction);
    for (std::size_t i = 0; i < m; ++i) roster.agents[i].malicious = true;
  }
  return roster;
}

std::size_t AgentRoster::malicious_count() const {
  return static_cast<std::size_t>(
      std::count_if(agents.begin(), agents.end(), [](const Agent& a) { return a.malicious; }));
}

std::string RoundRecord::to_json() const {
  nlohmann::json j;
  j["round"] = round;
  j["group"] = group;
  j["trajectories_sampled_total"] = trajectories_sampled_total;
  j["server_trajectories"] = server_trajectories;
  j["per_agent_update_norms"] = per_agent_update_norms;
  j["aggregated_norm"] = aggregated_norm;
  j["attack_active"] = attack_active;
  return j.dump();
}

GradientEstimator make_server_estimator(const TrainingSetup& setup, const MlpPolicy& policy,
                                        std::size_t server_batch) {
  return [env = setup.env, horizon = setup.horizon, returns = setup.returns, policy, server_batch](
             std::span<const double> sample_at, std::span<const double> grad_at,
             std::uint64_t seed) {
    // One stream per trajectory keeps the rollouts at two parameter points
    // paired even when an earlier episode ends at a different step.
    std::vector<TrajectoryScore> scores;
    scores.reserve(server_batch);
    for (std::size_t k = 0; k < server_batch; ++k) {
      Rng rng(derive_seed(seed, {k}));
      scores.push_back(score_rollout(policy, sample_at, grad_at, env, horizon, returns, rng));
    }
    return combine_scores(scores, returns);
  };
}

AggregatorOracle make_probe_oracle(const AggregatorSpec& spec, const TrainingSetup& setup,
                                   const MlpPolicy& policy, std::span<const double> theta,
                                   std::uint64_t probe_seed) {
  GradientEstimator server;
  if (spec.kind == AggregatorKind::fedpg_br) server = make_server_estimator(setup, policy, spec.fedpg_b);
  return [spec, server, theta = ParamVector(theta.begin(), theta.end()), lr = setup.lr,
          batch = setup.batch, probe_seed](std::span<const ParamVector> updates) {
    AggregatorSpec effective = spec;
    const std::size_t n = updates.size();
    if (effective.kind == AggregatorKind::trimmed_mean && 2 * effective.trim_c >= n)
      effective.trim_c = (n - 1) / 2;
    if (effective.kind == AggregatorKind::flame && n < 3) effective.kind = AggregatorKind::fedavg;
    AggregationContext ctx{theta, lr, batch, server ? &server : nullptr, probe_seed};
    return aggregate(effective, updates, ctx);
  };
}

RoundOutcome global_round(const TrainingSetup& setup, const MlpPolicy& policy,
                          std::span<const double> theta, std::span<const Agent> agents,
                          const AggregatorSpec& aggregator, const AttackSpec& attack,
                          const RoundContext& ctx) {
  if (agents.empty()) throw std::invalid_argument("global round with no agents");
  std::vector<Agent> ordered(agents.begin(), agents.end());
  std::sort(ordered.begin(), ordered.end(),
            [](const Agent& a, const Agent& b) { return a.id < b.id; });
  const std::size_t n = ordered.size();
  const bool active = attack.active_at(ctx.trajectories_before);

  std::vector<ParamVector> updates(n);
  parallel_for(n, setup.workers, [&](std::size_t i) {
    const Agent& agent = ordered[i];
    Rng rng(derive_seed(setup.master_seed, Stream::agent, {agent.id, ctx.round}));
    const Behaviour behaviour =
        (active && agent.malicious && attack.kind == AttackKind::random_action)
            ? Behaviour::uniform_random
            : Behaviour::policy;
    updates[i] = policy_gradient(policy, theta, setup.agent_env, setup.batch, setup.horizon,
                                 setup.returns, rng, behaviour);
  });

  std::vector<std::size_t> malicious_positions;
  for (std::size_t i = 0; i < n; ++i)
    if (ordered[i].malicious) malicious_positions.push_back(i);

  std::vector<ParamVector> submitted = updates;
  if (active && attack.crafts_updates() && !malicious_positions.empty()) {
    // Partial knowledge: the attack code only ever receives the malicious agents' updates.
    std::vector<ParamVector> own;
    AttackView view;
    view.n_malicious = malicious_positions.size();
    view.n_agents = n;
    view.knowledge = attack.knowledge;
    if (attack.knowledge == Knowledge::full) {
      view.visible = updates;
      view.malicious_positions = malicious_positions;
    } else {
      for (std::size_t pos : malicious_positions) own.push_back(updates[pos]);
      view.visible = own;
    }
    view.aggregator = make_probe_oracle(
        aggregator, setup, policy, theta,
        derive_seed(setup.master_seed, Stream::probe, {ctx.group, ctx.round}));
    Rng rng(derive_seed(setup.master_seed, Stream::attack, {ctx.group, ctx.round}));
    std::vector<ParamVector> crafted = craft_malicious_updates(attack, view, rng);
    for (std::size_t k = 0; k < malicious_positions.size(); ++k)
      submitted[malicious_positions[k]] = std::move(crafted[k]);
  }

  GradientEstimator server;
  if (aggregator.kind == AggregatorKind::fedpg_br)
    server = make_server_estimator(setup, policy, aggregator.fedpg_b);
  AggregationContext agg_ctx{theta, setup.lr, setup.batch, server ? &server : nullptr,
                             derive_seed(setup.master_seed, Stream::server, {ctx.group, ctx.round})};
  AggregationStats stats;
  ParamVector combined;
  try {
    combined = aggregate(aggregator, submitted, agg_ctx, &stats);
  } catch (const std::exception& e) {
    throw std::runtime_error("round " + std::to_string(ctx.round) + " (group " +
                             std::to_string(ctx.group) + "): " + e.what());
  }

  RoundOutcome out;
  out.theta.assign(theta.begin(), theta.end());
  axpy(setup.lr, combined, out.theta);
  if (!all_finite(out.theta))
    throw NumericFault("round " + std::to_string(ctx.round) + ": non-finite global policy");

  RoundRecord& rec = out.record;
  rec.round = ctx.round;
  rec.group = ctx.group;
  rec.trajectories_sampled_total = (ctx.trajectories_before + setup.batch) * n;
  rec.server_trajectories = stats.server_trajectories;
  rec.per_agent_update_norms.reserve(n);
  for (const auto& g : submitted) rec.per_agent_update_norms.push_back(norm(g));
  rec.aggregated_norm = norm(combined);
  rec.attack_active = active;
  return out;
}

}  // namespace frl
