#include <doctest.h>

#include <numeric>

#include "frl/ensemble.hpp"

using namespace frl;

namespace {

TrainingSetup setup_for(const EnvConfig& env) {
  TrainingSetup s;
  s.env = env;
  s.agent_env = env;
  s.arch = ArchSpec::for_env(env);
  s.batch = 4;
  s.horizon = 200;
  s.master_seed = 21;
  return s;
}

std::vector<std::size_t> iota_ids(std::size_t n) {
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

}  // namespace

TEST_CASE("group assignment") {
  const auto a = assign_groups(iota_ids(6), 3);
  const auto m = a.members();
  CHECK(m[0] == std::vector<std::size_t>{0, 3});
  CHECK(m[1] == std::vector<std::size_t>{1, 4});
  CHECK(m[2] == std::vector<std::size_t>{2, 5});
  const auto one = assign_groups(iota_ids(6), 1);
  CHECK(one.members()[0].size() == 6);
  CHECK_THROWS_AS(assign_groups(iota_ids(3), 4), std::invalid_argument);
  CHECK_THROWS_AS(assign_groups(iota_ids(3), 0), std::invalid_argument);

  const std::vector<std::string> names{"alpha", "beta", "gamma", "delta"};
  const auto g = assign_groups(names, 3);
  CHECK(g == assign_groups(names, 3));
  for (std::size_t v : g) CHECK(v < 3);
}

TEST_CASE("discrete vote") {
  // UP = 0, DOWN = 1
  CHECK(vote_discrete(std::vector<std::size_t>{0, 0, 1}, 2) == 0);
  CHECK(vote_discrete(std::vector<std::size_t>{1, 0}, 2) == 0);
  CHECK(vote_discrete(std::vector<std::size_t>{2, 1, 2, 1}, 3) == 1);
  CHECK(vote_discrete(std::vector<std::size_t>{1}, 2) == 1);
  CHECK(vote_counts(std::vector<std::size_t>{2, 2, 0}, 3) == std::vector<std::size_t>{1, 0, 2});
  CHECK_THROWS_AS(vote_discrete(std::vector<std::size_t>{}, 2), std::invalid_argument);
  CHECK_THROWS_AS(vote_discrete(std::vector<std::size_t>{2}, 2), std::invalid_argument);
}

TEST_CASE("continuous vote") {
  const ActionSpace box = ActionSpace::continuous(1, -100.0, 100.0);
  const std::vector<std::vector<double>> a{{0.0}, {0.0}, {10.0}};
  CHECK(aggregate_continuous(a, box)[0] == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(aggregate_continuous(a, box, ContinuousVote::fedavg)[0] == doctest::Approx(10.0 / 3.0));
  const std::vector<std::vector<double>> pair{{-1.0}, {1.0}};
  CHECK(aggregate_continuous(pair, box)[0] == doctest::Approx(0.0).epsilon(1e-6));
  const ActionSpace tight = ActionSpace::continuous(1, -3.0, 3.0);
  const std::vector<std::vector<double>> far{{10.0}, {10.0}, {10.0}};
  CHECK(aggregate_continuous(far, tight)[0] == 3.0);
  CHECK(parse_continuous_vote(continuous_vote_key(ContinuousVote::trimmed_mean)) ==
        ContinuousVote::trimmed_mean);
  CHECK_THROWS_AS(parse_continuous_vote("mode"), std::invalid_argument);
}

TEST_CASE("ensemble prediction") {
  const EnvConfig env = EnvConfig::cartpole();
  const MlpPolicy net(ArchSpec::for_env(env));
  Rng rng(3);
  EnsemblePolicy e;
  e.arch = net.arch();
  for (int i = 0; i < 5; ++i) e.members.push_back(net.init_params(rng));
  const std::array<double, 4> s{0.01, 0.2, -0.03, 0.1};

  std::vector<std::size_t> greedy;
  MlpPolicy::Scratch scratch;
  for (const auto& th : e.members)
    greedy.push_back(std::get<std::size_t>(net.greedy_from(net.forward(th, s, scratch))));
  CHECK(std::get<std::size_t>(ensemble_predict(net, e, s)) == vote_discrete(greedy, 2));

  EnsemblePolicy single = e;
  single.members.resize(1);
  CHECK(std::get<std::size_t>(ensemble_predict(net, single, s)) == greedy[0]);
}

TEST_CASE("ensemble training") {
  const TrainingSetup setup = setup_for(EnvConfig::cartpole());
  const MlpPolicy net(setup.arch);
  const AggregatorSpec avg{AggregatorKind::fedavg};

  SUBCASE("one group is plain federated training") {
    const AgentRoster roster = AgentRoster::make(4, 0.0);
    const EnsemblePolicy e = train_ensemble(setup, roster, assign_groups(iota_ids(4), 1), avg, {}, 3);
    Rng init(derive_seed(setup.master_seed, Stream::init));
    ParamVector theta = net.init_params(init);
    for (std::size_t t = 0; t < 3; ++t)
      theta = global_round(setup, net, theta, roster.agents, avg, {}, {t, 0, t * setup.batch}).theta;
    REQUIRE(e.size() == 1);
    CHECK(e.members[0] == theta);
  }

  SUBCASE("groups are isolated") {
    AttackSpec noise;
    noise.kind = AttackKind::random_noise;
    const auto groups = assign_groups(iota_ids(6), 2);
    const AgentRoster clean = AgentRoster::make(6, 0.0);
    const AgentRoster odd = AgentRoster::make(6, 0.0, std::vector<std::size_t>{1, 3, 5});
    const auto a = train_ensemble(setup, clean, groups, avg, noise, 2);
    const auto b = train_ensemble(setup, odd, groups, avg, noise, 2);
    CHECK(a.members[0] == b.members[0]);
    CHECK(a.members[1] != b.members[1]);
  }

  SUBCASE("deterministic across workers") {
    TrainingSetup many = setup;
    many.workers = 4;
    const AgentRoster roster = AgentRoster::make(6, 0.34);
    AttackSpec atk;
    atk.kind = AttackKind::trim;
    const AggregatorSpec med{AggregatorKind::coord_median};
    const auto groups = assign_groups(iota_ids(6), 3);
    CHECK(train_ensemble(setup, roster, groups, med, atk, 2).members ==
          train_ensemble(many, roster, groups, med, atk, 2).members);
  }

  SUBCASE("trainer bookkeeping") {
    const AgentRoster roster = AgentRoster::make(6, 0.0);
    EnsembleTrainer tr(setup, roster, assign_groups(iota_ids(6), 3),
                       std::vector<AggregatorSpec>(3, avg), {});
    std::size_t seen = 0;
    tr.run_round([&](const RoundRecord& r) {
      CHECK(r.group == seen);
      ++seen;
    });
    CHECK(seen == 3);
    CHECK(tr.rounds_completed() == 1);
    CHECK(tr.trajectories_per_agent() == setup.batch);
    CHECK_THROWS_AS(EnsembleTrainer(setup, roster, assign_groups(iota_ids(6), 3),
                                    std::vector<AggregatorSpec>(2, avg), {}),
                    std::invalid_argument);
  }
}

TEST_CASE("continuous ensemble trains") {
  const TrainingSetup setup = setup_for(EnvConfig::cartpole_continuous());
  const AgentRoster roster = AgentRoster::make(4, 0.0);
  const auto e = train_ensemble(setup, roster, assign_groups(iota_ids(4), 2),
                                {AggregatorKind::geometric_median}, {}, 1);
  const MlpPolicy net(setup.arch);
  const auto act = std::get<std::vector<double>>(ensemble_predict(net, e, std::array<double, 4>{}));
  REQUIRE(act.size() == 1);
  CHECK(act[0] >= -3.0);
  CHECK(act[0] <= 3.0);
}
