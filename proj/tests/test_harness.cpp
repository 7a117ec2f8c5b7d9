#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "frl/harness.hpp"

using namespace frl;
namespace fs = std::filesystem;

namespace {

ConfigMap small(ConfigMap extra = {}) {
  ConfigMap m{{"n_agents", "6"},
              {"K", "1"},
              {"malicious_fraction", "0.3"},
              {"batch_size", "4"},
              {"trajectories_per_agent", "12"},
              {"eval_interval", "4"},
              {"eval_episodes", "2"},
              {"horizon", "100"},
              {"seed", "5"}};
  for (const auto& [k, v] : extra) m[k] = v;
  return m;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("frl_test_" + name);
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST_CASE("config parsing") {
  const ConfigMap m = parse_config_text("# comment\n\nenv = cartpole\nK=3 \n  lr = 0.01 # tail\nK = 4\n");
  CHECK(m.at("env") == "cartpole");
  CHECK(m.at("K") == "4");
  CHECK(m.at("lr") == "0.01");
  CHECK_THROWS_AS(parse_config_text("novalue\n"), ConfigError);

  CHECK_THROWS_AS(ExperimentConfig::from_map({{"bogus", "1"}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_map({{"lr", "fast"}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_map({{"aggregator", "mode"}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_map({{"n_agents", "3"}, {"K", "5"}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_map({{"malicious_fraction", "1.5"}}), ConfigError);

  const auto c = ExperimentConfig::from_map({{"baseline", "batch_mean"}, {"heterogeneous", "true"}});
  CHECK(c.batch_mean_baseline);
  CHECK(c.reward_noise_var == doctest::Approx(0.1));
  CHECK(c.training_setup().returns.batch_mean_baseline);
  CHECK(c.training_setup().env.reward_noise_var == 0.0);

  const auto cc = ExperimentConfig::from_map({{"env", "cartpole_continuous"}});
  CHECK(cc.batch == 32);
  CHECK(cc.horizon == 1000);
}

TEST_CASE("config digest") {
  const auto a = ExperimentConfig::from_map(small());
  const auto b = ExperimentConfig::from_map(small({{"workers", "4"}}));
  const auto c = ExperimentConfig::from_map(small({{"seed", "6"}}));
  CHECK(a.digest().size() == 16);
  CHECK(a.digest() == b.digest());
  CHECK(a.digest() != c.digest());
  CHECK(a.canonical().find("seed=5") != std::string::npos);
}

TEST_CASE("defaults") {
  const auto c = ExperimentConfig::from_map({});
  CHECK(c.n_agents == 30);
  CHECK(c.k == 5);
  const auto aggs = c.group_aggregators(c.assignment());
  REQUIRE(aggs.size() == 5);
  CHECK(aggs[0].trim_c == 2);
  CHECK(c.roster().malicious_count() == 9);
}

TEST_CASE("random policy reward band") {
  const EnvConfig env = EnvConfig::cartpole();
  const MlpPolicy net(ArchSpec::for_env(env));
  const ParamVector zero(net.arch().param_count(), 0.0);
  const double r = evaluate_test_reward(net, zero, env, 10, 1);
  CHECK(r >= 8.0);
  CHECK(r <= 60.0);
}

TEST_CASE("run records") {
  SUBCASE("zero trajectories gives one evaluation") {
    const auto res = run_experiment(ExperimentConfig::from_map(small({{"trajectories_per_agent", "0"}})));
    REQUIRE(res.records.size() == 1);
    CHECK(res.records[0].trajectories == 0);
  }
  SUBCASE("evaluation schedule") {
    const auto res = run_experiment(ExperimentConfig::from_map(small()));
    std::vector<std::uint64_t> at;
    for (const auto& r : res.records) at.push_back(r.trajectories);
    CHECK(at == std::vector<std::uint64_t>{0, 4, 8, 12});
    for (const auto& r : res.records) CHECK(r.config_digest == ExperimentConfig::from_map(small()).digest());
  }
  SUBCASE("no attack equals no malicious agents") {
    const auto a = run_experiment(ExperimentConfig::from_map(small({{"attack", "none"}})));
    const auto b = run_experiment(ExperimentConfig::from_map(small({{"malicious_fraction", "0"}})));
    CHECK(a.run_digest == b.run_digest);
  }
}

TEST_CASE("outputs are identical across worker counts") {
  const fs::path d1 = scratch_dir("w1"), d4 = scratch_dir("w4");
  const ConfigMap base = small({{"K", "2"}, {"aggregator", "trimmed_mean"}, {"attack", "normalized"}});
  ConfigMap four = base;
  four["workers"] = "4";
  const auto a = run_experiment(ExperimentConfig::from_map(base), d1);
  const auto b = run_experiment(ExperimentConfig::from_map(four), d4);
  CHECK(a.run_digest == b.run_digest);
  for (const char* f : {"metrics.jsonl", "summary.csv", "rounds.jsonl", "config.txt", "run_digest.txt"}) {
    INFO(f);
    CHECK(fs::exists(d1 / f));
    CHECK(slurp(d1 / f) == slurp(d4 / f));
  }
  CHECK(slurp(d1 / "summary.csv").rfind("trajectories,reward,config_digest\n", 0) == 0);

  const auto ev = evaluate_checkpoint(d1 / "checkpoints", 2, 0);
  CHECK(ev.k == 2);
  CHECK(ev.round == 3);
  CHECK(ev.reward > 0.0);
  CHECK_THROWS(evaluate_checkpoint(scratch_dir("missing"), 2, 0));
  fs::remove_all(d1);
  fs::remove_all(d4);
}

TEST_CASE("sweeps") {
  SUBCASE("one point per value") {
    const auto pts = run_sweep(small({{"trajectories_per_agent", "4"}}), "malicious_fraction",
                               {"0", "0.2", "0.4"}, {}, 2);
    REQUIRE(pts.size() == 3);
    for (const auto& p : pts) CHECK(p.ok);
    CHECK(pts[1].value == "0.2");
  }
  SUBCASE("agent and group pairs") {
    const auto pts = run_sweep(small({{"trajectories_per_agent", "4"}}), "n_agents", {"6:1", "9:3"});
    REQUIRE(pts.size() == 2);
    CHECK(pts[1].ok);
    CHECK(pts[1].result.final_policy.size() == 3);
  }
  SUBCASE("single group point equals a plain run") {
    const auto pts = run_sweep(small({{"K", "3"}}), "K", {"1"});
    REQUIRE(pts.size() == 1);
    CHECK(pts[0].result.run_digest == run_experiment(ExperimentConfig::from_map(small())).run_digest);
  }
  SUBCASE("bad values are reported, not thrown") {
    const auto pts = run_sweep(small(), "K", {"1", "99"});
    CHECK(pts[0].ok);
    CHECK_FALSE(pts[1].ok);
    CHECK_FALSE(pts[1].error.empty());
  }
  CHECK_THROWS(run_sweep(small(), "colour", {"1"}));
}
