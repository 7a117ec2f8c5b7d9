#include "frl/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "frl/parallel.hpp"

namespace frl {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("key '" + key + "': expected a boolean, got '" + v + "'");
}

std::vector<std::size_t> to_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(to_u64(key, item));
  }
  return out;
}

template <class Parse>
auto wrap(const std::string& key, const std::string& v, Parse parse) {
  try {
    return parse(v);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("key '" + key + "': " + e.what());
  }
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string fmt_double(double v) {
  // Shortest round-trip representation.
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << text;
}

}  // namespace

ConfigMap parse_config_text(std::string_view text) {
  ConfigMap map;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = trim(std::string_view(stripped).substr(0, eq));
    const std::string value = trim(std::string_view(stripped).substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    map[key] = value;
    if (end == text.size()) break;
  }
  return map;
}

ConfigMap load_config_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str());
}

ExperimentConfig ExperimentConfig::from_map(const ConfigMap& map) {
  ExperimentConfig c;
  if (auto it = map.find("env"); it != map.end()) c.env = it->second;
  if (c.env == "cartpole_continuous") {
    c.batch = 32;
    c.gamma = 0.995;
    c.horizon = 1000;
    c.attack.zeta0 = 0.2;
    c.aggregator.fedpg_b = 12;
    c.aggregator.fedpg_sigma = 0.25;
    c.hidden = {64, 64};
    c.activation = Activation::tanh;
  } else if (c.env != "cartpole") {
    throw ConfigError("unknown env: " + c.env);
  }

  bool noise_set = false;
  for (const auto& [key, v] : map) {
    if (key == "env") continue;
    else if (key == "n_agents") c.n_agents = to_u64(key, v);
    else if (key == "malicious_fraction") c.malicious_fraction = to_double(key, v);
    else if (key == "malicious_ids") c.malicious_ids = to_list(key, v);
    else if (key == "K") c.k = to_u64(key, v);
    else if (key == "aggregator") c.aggregator.kind = wrap(key, v, parse_aggregator);
    else if (key == "trim_c") c.trim_c = to_u64(key, v);
    else if (key == "flame_lambda") c.aggregator.flame_lambda = to_double(key, v);
    else if (key == "fedpg_b") c.aggregator.fedpg_b = to_u64(key, v);
    else if (key == "fedpg_sigma") c.aggregator.fedpg_sigma = to_double(key, v);
    else if (key == "fedpg_delta") c.aggregator.fedpg_delta = to_double(key, v);
    else if (key == "fedpg_reuse") c.aggregator.fedpg_reuse = to_bool(key, v);
    else if (key == "gm_eps") c.aggregator.gm_eps = to_double(key, v);
    else if (key == "gm_max_iters") c.aggregator.gm_max_iters = to_u64(key, v);
    else if (key == "attack") c.attack.kind = wrap(key, v, parse_attack);
    else if (key == "knowledge") c.attack.knowledge = wrap(key, v, parse_knowledge);
    else if (key == "variant") c.attack.variant = wrap(key, v, parse_variant);
    else if (key == "delta") c.attack.delta = wrap(key, v, parse_delta);
    else if (key == "lambda0") c.attack.lambda0 = to_double(key, v);
    else if (key == "zeta0") c.attack.zeta0 = to_double(key, v);
    else if (key == "attack_max_iters") c.attack.max_iters = to_u64(key, v);
    else if (key == "attack_start_trajectories") c.attack.start_after = to_u64(key, v);
    else if (key == "batch_size") c.batch = to_u64(key, v);
    else if (key == "lr") c.lr = to_double(key, v);
    else if (key == "gamma") c.gamma = to_double(key, v);
    else if (key == "horizon") c.horizon = static_cast<int>(to_u64(key, v));
    else if (key == "baseline") {
      if (v == "batch_mean") c.batch_mean_baseline = true;
      else c.baseline = to_double(key, v);
    }
    else if (key == "discount_from_one") c.discount_from_one = to_bool(key, v);
    else if (key == "trajectories_per_agent") c.trajectories_per_agent = to_u64(key, v);
    else if (key == "eval_interval") c.eval_interval = to_u64(key, v);
    else if (key == "eval_episodes") c.eval_episodes = to_u64(key, v);
    else if (key == "seed") c.seed = to_u64(key, v);
    else if (key == "continuous_vote") c.continuous_vote = wrap(key, v, parse_continuous_vote);
    else if (key == "heterogeneous") c.heterogeneous = to_bool(key, v);
    else if (key == "reward_noise_var") {
      c.reward_noise_var = to_double(key, v);
      noise_set = true;
    } else if (key == "reward_noise_std") {
      const double sd = to_double(key, v);
      c.reward_noise_var = sd * sd;
      noise_set = true;
    } else if (key == "hidden") c.hidden = to_list(key, v);
    else if (key == "activation") {
      if (v == "relu") c.activation = Activation::relu;
      else if (v == "tanh") c.activation = Activation::tanh;
      else throw ConfigError("key 'activation': expected relu or tanh");
    } else if (key == "raw_logits") c.raw_logits = to_bool(key, v);
    else if (key == "workers") c.workers = std::max<std::uint64_t>(1, to_u64(key, v));
    else throw ConfigError("unknown config key: " + key);
  }
  if (c.heterogeneous && !noise_set) c.reward_noise_var = 0.1;
  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  if (n_agents == 0) throw ConfigError("n_agents must be >= 1");
  if (malicious_fraction < 0.0 || malicious_fraction > 1.0)
    throw ConfigError("malicious_fraction must be in [0, 1]");
  if (malicious_ids)
    for (std::size_t id : *malicious_ids)
      if (id >= n_agents) throw ConfigError("malicious id " + std::to_string(id) + " out of range");
  if (k == 0 || k > n_agents) throw ConfigError("K must be in [1, n_agents]");
  if (batch == 0) throw ConfigError("batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must be in (0, 1]");
  if (horizon <= 0) throw ConfigError("horizon must be >= 1");
  if (eval_interval == 0) throw ConfigError("eval_interval must be >= 1");
  if (eval_episodes == 0) throw ConfigError("eval_episodes must be >= 1");
  if (reward_noise_var < 0.0) throw ConfigError("reward_noise_var must be >= 0");
  if (hidden.empty()) throw ConfigError("hidden must list at least one width");
  if (attack.lambda0 <= 0.0 || attack.zeta0 <= 0.0)
    throw ConfigError("lambda0 and zeta0 must be > 0");
  if (attack.variant != Variant::IV && attack.kind != AttackKind::normalized)
    throw ConfigError("variant applies only to attack = normalized");
  const GroupAssignment a = assignment();
  const auto specs = group_aggregators(a);
  const auto members = a.members();
  for (std::size_t g = 0; g < specs.size(); ++g) {
    try {
      specs[g].validate(members[g].size());
    } catch (const std::invalid_argument& e) {
      throw ConfigError("group " + std::to_string(g) + ": " + e.what());
    }
  }
}

std::string ExperimentConfig::canonical() const {
  ConfigMap m;
  m["env"] = env;
  m["n_agents"] = std::to_string(n_agents);
  m["malicious_fraction"] = fmt_double(malicious_fraction);
  m["malicious_ids"] = malicious_ids ? join(*malicious_ids) : "default";
  m["K"] = std::to_string(k);
  m["aggregator"] = aggregator_key(aggregator.kind);
  m["trim_c"] = trim_c ? std::to_string(*trim_c) : "default";
  m["flame_lambda"] = fmt_double(aggregator.flame_lambda);
  m["fedpg_b"] = std::to_string(aggregator.fedpg_b);
  m["fedpg_sigma"] = fmt_double(aggregator.fedpg_sigma);
  m["fedpg_delta"] = fmt_double(aggregator.fedpg_delta);
  m["fedpg_reuse"] = aggregator.fedpg_reuse ? "true" : "false";
  m["gm_eps"] = fmt_double(aggregator.gm_eps);
  m["gm_max_iters"] = std::to_string(aggregator.gm_max_iters);
  m["attack"] = attack_key(attack.kind);
  m["knowledge"] = knowledge_key(attack.knowledge);
  m["variant"] = variant_key(attack.variant);
  m["delta"] = delta_key(attack.delta);
  m["lambda0"] = fmt_double(attack.lambda0);
  m["zeta0"] = fmt_double(attack.zeta0);
  m["attack_max_iters"] = std::to_string(attack.max_iters);
  m["attack_start_trajectories"] = std::to_string(attack.start_after);
  m["batch_size"] = std::to_string(batch);
  m["lr"] = fmt_double(lr);
  m["gamma"] = fmt_double(gamma);
  m["horizon"] = std::to_string(horizon);
  m["baseline"] = batch_mean_baseline ? "batch_mean" : fmt_double(baseline);
  m["discount_from_one"] = discount_from_one ? "true" : "false";
  m["trajectories_per_agent"] = std::to_string(trajectories_per_agent);
  m["eval_interval"] = std::to_string(eval_interval);
  m["eval_episodes"] = std::to_string(eval_episodes);
  m["seed"] = std::to_string(seed);
  m["continuous_vote"] = continuous_vote_key(continuous_vote);
  m["heterogeneous"] = heterogeneous ? "true" : "false";
  m["reward_noise_var"] = fmt_double(reward_noise_var);
  m["hidden"] = join(hidden);
  m["activation"] = activation == Activation::relu ? "relu" : "tanh";
  m["raw_logits"] = raw_logits ? "true" : "false";
  std::string out;
  for (const auto& [k2, v] : m) out += k2 + "=" + v + "\n";
  return out;
}

std::string ExperimentConfig::digest() const { return hex64(fnv1a64(canonical())); }

TrainingSetup ExperimentConfig::training_setup() const {
  TrainingSetup s;
  s.env = make_env(env);
  s.agent_env = s.env;
  s.agent_env.reward_noise_var = reward_noise_var;
  s.arch = ArchSpec::for_env(s.env);
  s.arch.hidden = hidden;
  s.arch.hidden_activation = activation;
  s.arch.raw_logits = raw_logits;
  s.batch = batch;
  s.horizon = horizon;
  s.returns = {gamma, baseline, discount_from_one, batch_mean_baseline};
  s.lr = lr;
  s.master_seed = seed;
  s.workers = workers;
  return s;
}

AgentRoster ExperimentConfig::roster() const {
  return AgentRoster::make(n_agents, malicious_fraction, malicious_ids);
}

GroupAssignment ExperimentConfig::assignment() const {
  std::vector<std::size_t> ids(n_agents);
  for (std::size_t i = 0; i < n_agents; ++i) ids[i] = i;
  return assign_groups(ids, k);
}

std::vector<AggregatorSpec> ExperimentConfig::group_aggregators(const GroupAssignment& a) const {
  std::vector<AggregatorSpec> out;
  for (const auto& members : a.members()) {
    AggregatorSpec spec = aggregator;
    if (trim_c) {
      spec.trim_c = *trim_c;
    } else {
      const std::size_t m = members.size();
      spec.trim_c = std::min(malicious_quota(m, malicious_fraction), m == 0 ? 0 : (m - 1) / 2);
    }
    out.push_back(spec);
  }
  return out;
}

std::string MetricsRecord::to_json() const {
  nlohmann::json j;
  j["trajectories"] = trajectories;
  j["reward"] = reward;
  j["group_rewards"] = group_rewards;
  j["config_digest"] = config_digest;
  return j.dump();
}

namespace {

template <class ChooseAction>
double run_episodes(const EnvConfig& env, std::size_t episodes, std::uint64_t seed,
                    ChooseAction&& choose) {
  EnvConfig clean = env;
  clean.reward_noise_var = 0.0;
  Rng rng(seed);
  double total = 0.0;
  for (std::size_t e = 0; e < episodes; ++e) {
    EnvState s = reset(clean, rng);
    bool done = false;
    while (!done) {
      const auto obs = s.observation();
      const StepResult r = step(clean, s, choose(obs), nullptr);
      total += r.reward;
      s = r.next;
      done = r.done;
    }
  }
  return total / static_cast<double>(episodes);
}

}  // namespace

double evaluate_test_reward(const MlpPolicy& network, const EnsemblePolicy& ensemble,
                            const EnvConfig& env, std::size_t episodes, std::uint64_t seed) {
  if (ensemble.size() == 1) return evaluate_test_reward(network, ensemble.members[0], env, episodes, seed);
  return run_episodes(env, episodes, seed, [&](const std::array<double, 4>& obs) {
    return ensemble_predict(network, ensemble, obs);
  });
}

double evaluate_test_reward(const MlpPolicy& network, std::span<const double> theta,
                            const EnvConfig& env, std::size_t episodes, std::uint64_t seed) {
  MlpPolicy::Scratch scratch;
  return run_episodes(env, episodes, seed, [&](const std::array<double, 4>& obs) {
    return network.greedy_from(network.forward(theta, obs, scratch));
  });
}

RunResult run_experiment(const ExperimentConfig& config,
                         const std::optional<std::filesystem::path>& out_dir) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  const TrainingSetup setup = config.training_setup();
  const GroupAssignment assignment = config.assignment();
  EnsembleTrainer trainer(setup, config.roster(), assignment, config.group_aggregators(assignment),
                          config.attack, config.continuous_vote);
  const std::string digest = config.digest();

  std::ofstream rounds_out, metrics_out, timing_out;
  std::filesystem::path ckpt_dir;
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    ckpt_dir = *out_dir / "checkpoints";
    std::filesystem::create_directories(ckpt_dir);
    rounds_out.open(*out_dir / "rounds.jsonl", std::ios::trunc);
    metrics_out.open(*out_dir / "metrics.jsonl", std::ios::trunc);
    timing_out.open(*out_dir / "timing.jsonl", std::ios::trunc);
    write_text(*out_dir / "config.txt", config.canonical());
  }

  RunResult result;
  std::uint64_t run_hash = 0xcbf29ce484222325ULL;
  auto absorb = [&](const EnsemblePolicy& p) {
    for (const auto& theta : p.members) {
      const auto* bytes = reinterpret_cast<const unsigned char*>(theta.data());
      for (std::size_t i = 0; i < theta.size() * sizeof(double); ++i) {
        run_hash ^= bytes[i];
        run_hash *= 0x100000001b3ULL;
      }
    }
  };
  absorb(trainer.policy());

  auto save_checkpoint = [&] {
    if (!out_dir) return;
    const EnsemblePolicy& p = trainer.policy();
    for (std::size_t g = 0; g < p.size(); ++g) {
      const auto dir = ckpt_dir / ("group_" + std::to_string(g));
      std::filesystem::create_directories(dir);
      save_params(dir / ("round_" + std::to_string(trainer.rounds_completed()) + ".params"),
                  p.members[g]);
    }
    nlohmann::json manifest;
    manifest["env"] = config.env;
    manifest["K"] = p.size();
    manifest["continuous_vote"] = continuous_vote_key(p.continuous_vote);
    manifest["latest_round"] = trainer.rounds_completed();
    manifest["arch"] = nlohmann::json::parse(arch_descriptor(p.arch));
    write_text(ckpt_dir / "manifest.json", manifest.dump(2) + "\n");
  };

  auto evaluate = [&] {
    MetricsRecord rec;
    rec.trajectories = trainer.trajectories_per_agent();
    rec.config_digest = digest;
    const std::uint64_t eval_seed = derive_seed(config.seed, Stream::eval, {rec.trajectories});
    const EnsemblePolicy& p = trainer.policy();
    rec.reward = evaluate_test_reward(trainer.network(), p, setup.env, config.eval_episodes, eval_seed);
    if (p.size() > 1) {
      for (const auto& theta : p.members)
        rec.group_rewards.push_back(
            evaluate_test_reward(trainer.network(), theta, setup.env, config.eval_episodes, eval_seed));
    }
    rec.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (out_dir) {
      metrics_out << rec.to_json() << "\n";
      nlohmann::json t;
      t["trajectories"] = rec.trajectories;
      t["wall_clock_seconds"] = rec.wall_clock_seconds;
      timing_out << t.dump() << "\n";
      save_checkpoint();
    }
    result.records.push_back(std::move(rec));
  };

  const std::size_t rounds = static_cast<std::size_t>(config.trajectories_per_agent / config.batch);
  evaluate();
  std::uint64_t next_eval = config.eval_interval;
  const auto sink = [&](const RoundRecord& r) {
    if (out_dir) rounds_out << r.to_json() << "\n";
  };
  for (std::size_t t = 0; t < rounds; ++t) {
    trainer.run_round(sink);
    absorb(trainer.policy());
    const std::uint64_t done = trainer.trajectories_per_agent();
    if (done >= next_eval || t + 1 == rounds) {
      evaluate();
      while (next_eval <= done) next_eval += config.eval_interval;
    }
  }

  result.final_policy = trainer.policy();
  result.run_digest = hex64(run_hash);
  result.server_trajectories = trainer.server_trajectories();
  if (out_dir) {
    std::string csv = "trajectories,reward,config_digest\n";
    for (const auto& r : result.records)
      csv += std::to_string(r.trajectories) + "," + fmt_double(r.reward) + "," + r.config_digest + "\n";
    write_text(*out_dir / "summary.csv", csv);
    write_text(*out_dir / "run_digest.txt", result.run_digest + "\n");
  }
  return result;
}

std::vector<SweepPoint> run_sweep(const ConfigMap& base, std::string_view axis,
                                  const std::vector<std::string>& values,
                                  const std::optional<std::filesystem::path>& out_dir,
                                  std::size_t workers) {
  static const std::map<std::string, std::string, std::less<>> kAxisKey = {
      {"malicious_fraction", "malicious_fraction"},
      {"n_agents", "n_agents"},
      {"K", "K"},
      {"delta_kind", "delta"},
      {"variant", "variant"},
      {"knowledge", "knowledge"},
      {"attack_start", "attack_start_trajectories"},
      {"continuous_vote", "continuous_vote"},
      {"heterogeneous", "heterogeneous"},
  };
  const auto axis_it = kAxisKey.find(axis);
  if (axis_it == kAxisKey.end()) throw ConfigError("unknown sweep axis: " + std::string(axis));

  std::vector<SweepPoint> points(values.size());
  parallel_for(values.size(), workers, [&](std::size_t i) {
    SweepPoint& p = points[i];
    p.value = values[i];
    try {
      ConfigMap map = base;
      if (axis == "n_agents" && values[i].find(':') != std::string::npos) {
        const auto colon = values[i].find(':');
        map["n_agents"] = values[i].substr(0, colon);
        map["K"] = values[i].substr(colon + 1);
      } else {
        map[axis_it->second] = values[i];
      }
      const ExperimentConfig cfg = ExperimentConfig::from_map(map);
      std::optional<std::filesystem::path> dir;
      if (out_dir) {
        std::string name = std::string(axis) + "=" + values[i];
        std::replace(name.begin(), name.end(), ':', '_');
        dir = *out_dir / name;
      }
      p.result = run_experiment(cfg, dir);
      p.ok = true;
    } catch (const std::exception& e) {
      p.error = e.what();
    }
  });

  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    std::ofstream os(*out_dir / "sweep.jsonl", std::ios::trunc);
    for (const auto& p : points) {
      nlohmann::json j;
      j["axis"] = std::string(axis);
      j["value"] = p.value;
      j["ok"] = p.ok;
      if (p.ok) {
        j["final_reward"] = p.result.records.back().reward;
        j["run_digest"] = p.result.run_digest;
      } else {
        j["error"] = p.error;
      }
      os << j.dump() << "\n";
    }
  }
  return points;
}

CheckpointEval evaluate_checkpoint(const std::filesystem::path& dir, std::size_t episodes,
                                   std::uint64_t seed) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw std::runtime_error("no manifest.json in " + dir.string());
  const auto manifest = nlohmann::json::parse(is);
  EnsemblePolicy ensemble;
  ensemble.arch = parse_arch_descriptor(manifest.at("arch").dump());
  ensemble.continuous_vote = parse_continuous_vote(manifest.at("continuous_vote").get<std::string>());
  const std::size_t k = manifest.at("K").get<std::size_t>();
  const std::size_t round = manifest.at("latest_round").get<std::size_t>();
  const MlpPolicy network(ensemble.arch);
  for (std::size_t g = 0; g < k; ++g) {
    ParamVector theta = load_params(dir / ("group_" + std::to_string(g)) /
                                    ("round_" + std::to_string(round) + ".params"));
    if (theta.size() != network.param_count())
      throw std::runtime_error("checkpoint dimension does not match its arch descriptor");
    ensemble.members.push_back(std::move(theta));
  }
  const EnvConfig env = make_env(manifest.at("env").get<std::string>());
  return {evaluate_test_reward(network, ensemble, env, episodes, seed), k, round};
}

}  // namespace frl
