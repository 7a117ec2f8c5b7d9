// Acceptance suite: one PASS/FAIL line per criterion. Criteria 1-3 train many
// full-budget runs and dominate the runtime.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "frl/certify.hpp"
#include "frl/harness.hpp"
#include "frl/parallel.hpp"
#include "grid_oracle.hpp"

using namespace frl;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void progress(const std::string& s) { std::cerr << "[acceptance] " << s << std::endl; }

// ---- training criteria -----------------------------------------------------

const std::vector<std::uint64_t> kSeeds{0, 1, 2};

ConfigMap training_base() {
  // Library defaults otherwise (n = 30, B = 16, lr = 1e-3, 5000 trajectories per agent).
  return {{"env", "cartpole"}, {"baseline", "batch_mean"}};
}

// Mean final test reward over kSeeds; every run is independent.
double mean_final(ConfigMap map, std::vector<double>* per_seed = nullptr) {
  std::vector<double> finals(kSeeds.size());
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < kSeeds.size(); ++i) {
    map["seed"] = std::to_string(kSeeds[i]);
    finals[i] = run_experiment(ExperimentConfig::from_map(map)).records.back().reward;
  }
  double m = 0.0;
  for (double f : finals) m += f;
  m /= static_cast<double>(finals.size());
  std::string desc;
  for (const auto& [k, v] : map)
    if (k != "seed" && k != "env") desc += k + "=" + v + " ";
  progress(desc + fmt("-> %.1f (%.1f, %.1f, %.1f) in %.0fs", m, finals[0], finals[1], finals[2],
                      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()));
  if (per_seed) *per_seed = finals;
  return m;
}

ConfigMap with(ConfigMap m, const ConfigMap& extra) {
  for (const auto& [k, v] : extra) m[k] = v;
  return m;
}

double g_clean_fedavg = 0.0;

Verdict criterion1() {
  const ConfigMap clean = with(training_base(), {{"K", "1"}, {"aggregator", "fedavg"}, {"attack", "none"}});
  std::vector<double> seeds;
  g_clean_fedavg = mean_final(clean, &seeds);
  // Same runs with the zero baseline, reported for information only.
  const double zero = mean_final(with(clean, {{"baseline", "0"}}));
  return {g_clean_fedavg >= 450.0,
          fmt("FedAvg K=1 clean mean final reward %.1f over 3 seeds (%.1f, %.1f, %.1f), need >= 450; "
              "with zero baseline: %.1f",
              g_clean_fedavg, seeds[0], seeds[1], seeds[2], zero)};
}

Verdict criterion2() {
  bool all = true;
  std::string detail;
  for (const char* rule : {"trimmed_mean", "coord_median", "fedpg_br"}) {
    const ConfigMap base = with(training_base(), {{"K", "1"}, {"aggregator", rule}});
    const double clean = mean_final(with(base, {{"attack", "none"}}));
    const double attacked = mean_final(with(base, {{"attack", "normalized"}}));
    const bool ok = attacked <= 0.5 * clean;
    all = all && ok;
    detail += fmt("%s clean %.1f attacked %.1f (%s); ", rule, clean, attacked, ok ? "ok" : "not degraded");
  }
  return {all, detail + "need attacked <= 50% of clean"};
}

Verdict criterion3() {
  bool all = true;
  std::string detail;
  const double need = 0.9 * g_clean_fedavg;
  for (const char* rule : {"trimmed_mean", "coord_median", "fedpg_br"}) {
    std::string cells;
    bool rule_ok = true;
    for (const char* attack : {"normalized", "trim", "shejwalkar", "random_noise", "random_action"}) {
      const double r = mean_final(with(training_base(), {{"K", "5"}, {"aggregator", rule}, {"attack", attack}}));
      rule_ok = rule_ok && r >= need;
      cells += fmt(" %s=%.1f", attack, r);
    }
    all = all && rule_ok;
    detail += std::string(rule) + (rule_ok ? " ok:" : " FAIL:") + cells + "; ";
  }
  return {all, detail + fmt("need >= %.1f (90%% of clean FedAvg %.1f)", need, g_clean_fedavg)};
}

// ---- certification ------------------------------------------------------------

void compositions(std::size_t total, std::size_t parts, std::vector<std::size_t>& cur,
                  const std::function<void(const std::vector<std::size_t>&)>& visit) {
  if (cur.size() + 1 == parts) {
    cur.push_back(total);
    visit(cur);
    cur.pop_back();
    return;
  }
  for (std::size_t v = 0; v <= total; ++v) {
    cur.push_back(v);
    compositions(total - v, parts, cur, visit);
    cur.pop_back();
  }
}

Verdict criterion4() {
  std::size_t profiles = 0, tight = 0, failures = 0;
  std::string first;
  for (std::size_t k = 1; k <= 7; ++k)
    for (std::size_t m = 2; m <= 4; ++m) {
      std::vector<std::size_t> cur;
      compositions(k, m, cur, [&](const std::vector<std::size_t>& counts) {
        ++profiles;
        const VoteProfile p{counts};
        const auto c = tolerance_discrete(p);
        bool ok = c.certified && flip_oracle_discrete(p, c.tolerance).holds;
        // n'+1 corrupted groups are achievable when x holds that many votes.
        if (counts[c.top] >= c.tolerance + 1) {
          ++tight;
          ok = ok && !flip_oracle_discrete(p, c.tolerance + 1).holds;
        }
        if (!ok && failures++ == 0) {
          first = "first failure at votes";
          for (std::size_t v : counts) first += " " + std::to_string(v);
        }
      });
    }
  return {failures == 0, fmt("%zu profiles (K=1..7, 2..4 actions), holds at n' for all, tight at n'+1 "
                             "on %zu achievable; %zu failures ",
                             profiles, tight, failures) + first};
}

Verdict criterion5() {
  Rng rng(derive_seed(55, {5}));
  std::size_t trials = 0;
  double worst_ratio = 0.0;
  bool ok = true;
  const std::size_t per_set = 84;
  while (trials < 10000) {
    for (std::size_t k : {3, 5, 7})
      for (std::size_t np = 1; 2 * np < k; ++np)
        for (std::size_t d = 1; d <= 4; ++d) {
          std::vector<ParamVector> pts(k, ParamVector(d));
          const double spread = std::exp(rng.uniform(-3.0, 3.0));
          for (auto& p : pts)
            for (double& v : p) v = rng.normal(0.0, spread);
          const auto r = displacement_oracle_continuous(pts, np, per_set, rng);
          trials += per_set;
          const double bound = bound_continuous(k, np, r.w);
          ok = ok && r.max_displacement <= bound + 1e-6;
          if (bound > 0) worst_ratio = std::max(worst_ratio, r.max_displacement / bound);
        }
  }
  return {ok, fmt("%zu corruption trials over K in {3,5,7}, all n' < K/2, dims 1..4; "
                  "max displacement / bound = %.4f",
                  trials, worst_ratio)};
}

// ---- numerics -------------------------------------------------------------------

Verdict criterion6() {
  Rng rng(derive_seed(66, {6}));
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + rng.index(7);
    const std::size_t d = 1 + rng.index(3);
    std::vector<ParamVector> pts(n, ParamVector(d));
    for (auto& p : pts)
      for (double& v : p) v = rng.uniform(-5.0, 5.0);
    const double ours = geometric_median_objective(pts, geometric_median(pts));
    const double grid = grid_min_objective(pts);
    worst = std::max(worst, ours / std::max(grid, 1e-300));
  }
  const std::vector<ParamVector> tri{{0, 0}, {2, 0}, {1, 1}};
  const ParamVector z = geometric_median(tri);
  const bool analytic = std::abs(z[0] - 1.0) <= 1e-3 && std::abs(z[1] - 0.5774) <= 1e-3;
  return {worst <= 1.0 + 1e-6 && analytic,
          fmt("worst objective / grid over 100 sets = %.9f (need <= 1+1e-6); triangle -> (%.4f, %.4f)",
              worst, z[0], z[1])};
}

double max_rel_fd_error(const ArchSpec& arch, std::uint64_t seed) {
  MlpPolicy p(arch);
  Rng rng(seed);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    ParamVector theta = p.init_params(rng);
    for (double& v : theta) v += rng.normal(0.0, 0.3);
    std::vector<double> s(arch.input_dim);
    for (double& v : s) v = rng.uniform(-1.0, 1.0);
    const Action a = p.sample_action(theta, s, rng);
    const ParamVector g = p.logprob_grad(theta, s, a);
    const double h = 1e-5;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      ParamVector tp = theta, tm = theta;
      tp[i] += h;
      tm[i] -= h;
      const double fd = (p.log_prob(tp, s, a) - p.log_prob(tm, s, a)) / (2 * h);
      worst = std::max(worst, std::abs(fd - g[i]) / std::max(1.0, std::abs(fd) + std::abs(g[i])));
    }
  }
  return worst;
}

Verdict criterion7() {
  const ArchSpec cat = ArchSpec::for_env(EnvConfig::cartpole());
  ArchSpec raw = cat;
  raw.raw_logits = true;
  const ArchSpec gauss = ArchSpec::for_env(EnvConfig::cartpole_continuous());
  const double a = max_rel_fd_error(cat, 71), b = max_rel_fd_error(raw, 72), c = max_rel_fd_error(gauss, 73);
  return {std::max({a, b, c}) <= 1e-4,
          fmt("max relative error: categorical %.2e, raw-logit categorical %.2e, gaussian %.2e", a, b, c)};
}

// ---- determinism -------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict criterion8() {
  const std::vector<ConfigMap> cases{
      {{"K", "2"}, {"aggregator", "trimmed_mean"}, {"attack", "normalized"}},
      {{"K", "1"}, {"aggregator", "fedpg_br"}, {"attack", "trim"}},
      {{"K", "3"}, {"aggregator", "flame"}, {"attack", "random_noise"}},
      {{"K", "2"}, {"aggregator", "geometric_median"}, {"attack", "random_action"}, {"heterogeneous", "true"}},
      {{"env", "cartpole_continuous"}, {"K", "3"}, {"aggregator", "coord_median"}, {"attack", "shejwalkar"},
       {"trajectories_per_agent", "64"}, {"eval_interval", "32"}},
  };
  const fs::path root = fs::temp_directory_path() / "frl_acceptance_det";
  std::size_t compared = 0;
  std::string bad;
  for (std::size_t c = 0; c < cases.size(); ++c) {
    ConfigMap m = with({{"n_agents", "12"}, {"trajectories_per_agent", "160"}, {"eval_interval", "48"},
                        {"eval_episodes", "3"}, {"seed", "17"}},
                       cases[c]);
    std::vector<fs::path> dirs;
    for (const char* w : {"1", "4", "1"}) {
      const fs::path d = root / fmt("case%zu_run%zu", c, dirs.size());
      fs::remove_all(d);
      m["workers"] = w;
      run_experiment(ExperimentConfig::from_map(m), d);
      dirs.push_back(d);
    }
    for (const char* f : {"metrics.jsonl", "summary.csv", "rounds.jsonl", "config.txt", "run_digest.txt"}) {
      const std::string ref = slurp(dirs[0] / f);
      for (std::size_t r = 1; r < dirs.size(); ++r) {
        ++compared;
        if (ref.empty() || slurp(dirs[r] / f) != ref) bad += fmt(" case%zu/%s", c, f);
      }
    }
  }
  fs::remove_all(root);
  return {bad.empty(), fmt("%zu configurations x workers {1,4,1}: %zu file comparisons byte-identical",
                           cases.size(), compared) +
                           (bad.empty() ? "" : "; differing:" + bad)};
}

// ---- attack identities ------------------------------------------------------

AggregatorOracle oracle_for(AggregatorKind kind) {
  return [kind](std::span<const ParamVector> u) -> ParamVector {
    switch (kind) {
      case AggregatorKind::coord_median: return coord_median(u);
      case AggregatorKind::geometric_median: return geometric_median(u);
      case AggregatorKind::trimmed_mean: return trimmed_mean(u, 1);
      default: return fedavg(u);
    }
  };
}

Verdict criterion9() {
  Rng rng(derive_seed(99, {9}));
  std::size_t instances = 0, violations = 0;
  double identity_err = 0.0, grid_gap = 0.0;
  for (int t = 0; t < 60; ++t) {
    const std::size_t d = 1 + rng.index(3);
    ParamVector b(d);
    for (double& v : b) v = rng.normal(0.0, 2.0);
    if (norm(b) == 0.0) continue;
    identity_err = std::max(identity_err, std::abs(deviation_objective(b, b, true).value));
    identity_err = std::max(identity_err, std::abs(deviation_objective(b, scaled(b, -rng.uniform(0.1, 10.0)), true).value - 2.0));

    const std::size_t n = 5 + rng.index(3);
    std::vector<ParamVector> u(n, ParamVector(d));
    for (auto& g : u)
      for (double& v : g) v = rng.normal(1.0, 1.5);
    const std::vector<AggregatorKind> kinds{AggregatorKind::fedavg, AggregatorKind::trimmed_mean,
                                            AggregatorKind::coord_median, AggregatorKind::geometric_median};
    AttackView v;
    v.visible = u;
    v.malicious_positions = {0, 1};
    v.n_malicious = 2;
    v.n_agents = n;
    v.knowledge = Knowledge::full;
    v.aggregator = oracle_for(kinds[static_cast<std::size_t>(t) % kinds.size()]);
    const ParamVector ref = v.reference_aggregate();
    if (norm(ref) == 0.0) continue;
    ++instances;
    const ParamVector delta = perturbation_vector(DeltaKind::sgn, u);
    const ParamVector unit = scaled(ref, 1.0 / norm(ref));
    auto dev = [&](const ParamVector& g, bool normalized) {
      return deviation_objective(ref, v.attacked_aggregate(g), normalized).value;
    };

    // Stage one against lambda = 0 and a grid over its reachable interval.
    const auto s1 = normalized_stage1(v, delta, 0.83, true, {});
    auto along = [&](const ParamVector& base, double x) {
      ParamVector g = base;
      axpy(x, delta, g);
      return g;
    };
    if (s1.objective < dev(along(unit, 0.0), true) - 1e-12) ++violations;
    double best = 0.0;
    for (double l = 0.83 - 1.5 * 0.83; l <= 0.83 + 1.5 * 0.83; l += 0.005) best = std::max(best, dev(along(unit, l), true));
    grid_gap = std::max(grid_gap, best - s1.objective);

    // Stage two against zeta = 1.
    const auto s2 = normalized_stage2(v, s1.direction, 0.03, true, {});
    if (s2.objective < dev(scaled(s1.direction, 1.0 / norm(s1.direction)), true) - 1e-12) ++violations;

    // Shejwalkar against gamma = 0.
    const ParamVector avg = mean_of(u);
    const auto sh = shejwalkar_attack(v, delta, 0.83, {});
    if (sh.objective < dev(along(avg, 0.0), false) - 1e-12) ++violations;
  }
  return {violations == 0 && identity_err <= 1e-12,
          fmt("objective identities max error %.1e; %zu toy instances, %zu baseline violations "
              "(lambda=0, zeta=1, gamma=0); max stage-1 gap to grid %.4f",
              identity_err, instances, violations, grid_gap)};
}

}  // namespace

int main() {
  std::map<int, Verdict> results;
  const std::vector<std::pair<int, std::function<Verdict()>>> order{
      {4, criterion4}, {5, criterion5}, {6, criterion6}, {7, criterion7}, {9, criterion9},
      {8, criterion8}, {1, criterion1}, {2, criterion2}, {3, criterion3}};
  for (const auto& [id, fn] : order) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      results[id] = fn();
    } catch (const std::exception& e) {
      results[id] = {false, std::string("exception: ") + e.what()};
    }
    progress(fmt("criterion %d done in %.0fs: %s", id,
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(),
                 results[id].pass ? "PASS" : "FAIL"));
  }
  bool all = true;
  for (const auto& [id, v] : results) {
    std::cout << "criterion " << id << ": " << (v.pass ? "PASS" : "FAIL") << "  " << v.detail << "\n";
    all = all && v.pass;
  }
  return all ? 0 : 1;
}
