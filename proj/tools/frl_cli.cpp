#include <CLI11.hpp>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "frl/certify.hpp"
#include "frl/harness.hpp"

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<std::size_t> split_counts(const std::string& s) {
  std::vector<std::size_t> out;
  for (const auto& item : split(s, ',')) out.push_back(std::stoull(item));
  return out;
}

nlohmann::json records_json(const frl::RunResult& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& rec : r.records) rows.push_back(nlohmann::json::parse(rec.to_json()));
  return rows;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"federated RL poisoning testbed"};
  app.require_subcommand(1);

  std::string config_path, out_dir, axis, values, checkpoint, votes, indices;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::size_t episodes = 10;
  std::uint64_t eval_seed = 0;
  bool continuous = false;
  std::size_t k = 0, nprime = 0;
  double w = 0.0;

  auto* run = app.add_subcommand("run", "train one configuration");
  run->add_option("--config", config_path, "key = value config file")->required();
  run->add_option("--seed", seed, "override the master seed");
  run->add_option("--workers", workers, "worker threads");
  run->add_option("--out", out_dir, "output directory");

  auto* sweep = app.add_subcommand("sweep", "train one configuration per axis value");
  sweep->add_option("--config", config_path)->required();
  sweep->add_option("--axis", axis)->required();
  sweep->add_option("--values", values, "comma separated")->required();
  sweep->add_option("--workers", workers, "concurrent points");
  sweep->add_option("--out", out_dir);

  auto* eval = app.add_subcommand("eval", "evaluate a saved checkpoint");
  eval->add_option("--checkpoint", checkpoint, "checkpoints directory")->required();
  eval->add_option("--episodes", episodes);
  eval->add_option("--seed", eval_seed);

  auto* cert = app.add_subcommand("certify", "certified tolerance or displacement bound");
  cert->add_option("--votes", votes, "per-action vote counts, comma separated");
  cert->add_option("--indices", indices, "tie-break order of the actions, comma separated");
  cert->add_flag("--continuous", continuous);
  cert->add_option("--k", k);
  cert->add_option("--nprime", nprime);
  cert->add_option("--w", w);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*run) {
      frl::ConfigMap map = frl::load_config_file(config_path);
      if (seed) map["seed"] = std::to_string(*seed);
      if (workers) map["workers"] = std::to_string(*workers);
      const auto cfg = frl::ExperimentConfig::from_map(map);
      std::optional<std::filesystem::path> dir;
      if (!out_dir.empty()) dir = out_dir;
      const auto result = frl::run_experiment(cfg, dir);
      nlohmann::json j;
      j["config_digest"] = cfg.digest();
      j["run_digest"] = result.run_digest;
      j["final_reward"] = result.records.back().reward;
      j["server_trajectories"] = result.server_trajectories;
      j["records"] = records_json(result);
      std::cout << j.dump() << "\n";
    } else if (*sweep) {
      const frl::ConfigMap map = frl::load_config_file(config_path);
      std::optional<std::filesystem::path> dir;
      if (!out_dir.empty()) dir = out_dir;
      const auto points = frl::run_sweep(map, axis, split(values, ','), dir, workers.value_or(1));
      nlohmann::json rows = nlohmann::json::array();
      bool all_ok = true;
      for (const auto& p : points) {
        nlohmann::json j;
        j["value"] = p.value;
        j["ok"] = p.ok;
        if (p.ok) {
          j["final_reward"] = p.result.records.back().reward;
          j["run_digest"] = p.result.run_digest;
        } else {
          j["error"] = p.error;
          all_ok = false;
        }
        rows.push_back(j);
      }
      std::cout << nlohmann::json{{"axis", axis}, {"points", rows}}.dump() << "\n";
      return all_ok ? 0 : 1;
    } else if (*eval) {
      const auto r = frl::evaluate_checkpoint(checkpoint, episodes, eval_seed);
      std::cout << nlohmann::json{{"reward", r.reward}, {"K", r.k}, {"round", r.round}}.dump()
                << "\n";
    } else if (*cert) {
      if (continuous) {
        std::cout << frl::certify_continuous(k, nprime, w).to_json() << "\n";
      } else {
        if (votes.empty()) throw std::invalid_argument("--votes is required");
        auto counts = split_counts(votes);
        // --indices relabels the actions so ties break in the given order.
        std::vector<std::size_t> order;
        if (!indices.empty()) {
          order = split_counts(indices);
          if (order.size() != counts.size())
            throw std::invalid_argument("--indices must list one index per action");
          std::vector<std::size_t> ranked(counts.size());
          std::vector<bool> seen(counts.size(), false);
          for (std::size_t i = 0; i < order.size(); ++i) {
            if (order[i] >= counts.size() || seen[order[i]])
              throw std::invalid_argument("--indices must be a permutation");
            seen[order[i]] = true;
            ranked[i] = counts[order[i]];
          }
          counts = ranked;
        }
        auto b = frl::certify_discrete(frl::VoteProfile{counts});
        if (!order.empty()) {
          b.top = order[b.top];
          b.second = order[b.second];
          std::vector<std::size_t> original(counts.size());
          for (std::size_t i = 0; i < order.size(); ++i) original[order[i]] = counts[i];
          b.profile.counts = original;
        }
        std::cout << b.to_json() << "\n";
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
