#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "frl/rng.hpp"
#include "frl/vecops.hpp"

namespace frl {

enum class AttackKind { none, random_action, random_noise, trim, shejwalkar, normalized };
enum class Knowledge { full, partial };
// I: direction search only. II: magnitude search only. III: both, unnormalized
// objective. IV: both, normalized objective.
enum class Variant { I, II, III, IV };
enum class DeltaKind { uv, std, sgn };

AttackKind parse_attack(std::string_view key);
std::string attack_key(AttackKind kind);
Knowledge parse_knowledge(std::string_view key);
std::string knowledge_key(Knowledge k);
Variant parse_variant(std::string_view key);
std::string variant_key(Variant v);
DeltaKind parse_delta(std::string_view key);
std::string delta_key(DeltaKind d);

struct AttackSpec {
  AttackKind kind = AttackKind::none;
  Knowledge knowledge = Knowledge::full;
  Variant variant = Variant::IV;
  DeltaKind delta = DeltaKind::sgn;
  double lambda0 = 0.83;  // also the initial step of the Shejwalkar search
  double zeta0 = 0.03;
  std::size_t max_iters = 30;
  double step_tolerance = 1e-5;
  // Attack is inert until every agent has sampled this many trajectories.
  std::uint64_t start_after = 0;

  bool crafts_updates() const {
    return kind == AttackKind::random_noise || kind == AttackKind::trim ||
           kind == AttackKind::shejwalkar || kind == AttackKind::normalized;
  }
  bool active_at(std::uint64_t trajectories_per_agent) const {
    return kind != AttackKind::none && trajectories_per_agent >= start_after;
  }
};

using AggregatorOracle = std::function<ParamVector(std::span<const ParamVector>)>;

// What the attacker sees in one round. In full knowledge `visible` holds all n
// benign-computed updates in id order and `malicious_positions` indexes into
// it; in partial knowledge `visible` holds only the malicious agents' own
// benign-computed updates and `malicious_positions` is ignored; the
// post-attack world is then simulated with those updates standing in for the
// n_agents - n_malicious benign agents.
struct AttackView {
  std::span<const ParamVector> visible;
  std::vector<std::size_t> malicious_positions;
  std::size_t n_malicious = 0;
  std::size_t n_agents = 0;
  Knowledge knowledge = Knowledge::full;
  AggregatorOracle aggregator;

  // Pre-attack aggregate (true in full knowledge, estimated in partial).
  ParamVector reference_aggregate() const;
  // Post-attack aggregate with every malicious agent submitting `crafted`.
  ParamVector attacked_aggregate(std::span<const double> crafted) const;
};

// AR over the malicious agents' own updates, standing in for AR over all.
ParamVector partial_estimate(std::span<const ParamVector> malicious_updates,
                             const AggregatorOracle& aggregator);

ParamVector random_noise(std::size_t d, Rng& rng, double variance = 1000.0);

// uv: -Avg/|Avg| (sgn when |Avg| = 0); std: -population std; sgn: -sign(Avg).
ParamVector perturbation_vector(DeltaKind kind, std::span<const ParamVector> visible);

struct Deviation {
  double value = 0.0;
  bool degenerate = false;  // a zero vector under the normalized objective
};

// normalized: |before/|before| - after/|after||; otherwise |before - after|.
Deviation deviation_objective(std::span<const double> before, std::span<const double> after,
                              bool normalized);

struct SearchProbe {
  double parameter = 0.0;
  double objective = 0.0;
};

struct SearchResult {
  double parameter = 0.0;
  double objective = 0.0;
  std::vector<SearchProbe> probes;
};

struct SearchOptions {
  std::size_t max_iters = 30;
  double tolerance = 1e-5;
};

// Decaying-step hill climb: probe `start`, move by +step when the objective
// rose against the previous probe and by -step otherwise, divide the step by 3
// after each move. The first comparison is against `baseline`, which is also
// eligible as the answer; when it equals `start` the first move is +step.
// Returns the best probe seen; ties keep the earlier.
SearchResult decaying_search(const std::function<double(double)>& objective, double baseline,
                             double start, double step, const SearchOptions& options);

struct NormalizedStage1 {
  double lambda = 0.0;
  double objective = 0.0;
  ParamVector direction;  // AR/|AR| + lambda * delta
  std::vector<SearchProbe> probes;
};

NormalizedStage1 normalized_stage1(const AttackView& view, std::span<const double> delta,
                                   double lambda0, bool normalized_objective,
                                   const SearchOptions& options);

struct NormalizedStage2 {
  double zeta = 0.0;
  double objective = 0.0;
  ParamVector update;  // direction/|direction| * zeta
  std::vector<SearchProbe> probes;
};

// Throws std::invalid_argument when the direction is the zero vector.
NormalizedStage2 normalized_stage2(const AttackView& view, std::span<const double> direction,
                                   double zeta0, bool normalized_objective,
                                   const SearchOptions& options);

struct NormalizedOutcome {
  ParamVector update;
  double lambda = 0.0;
  double zeta = 0.0;
  double objective = 0.0;
};

NormalizedOutcome normalized_attack(const AttackView& view, const AttackSpec& spec);

struct ShejwalkarOutcome {
  ParamVector update;
  double gamma = 0.0;
  double objective = 0.0;
  std::vector<SearchProbe> probes;
};

ShejwalkarOutcome shejwalkar_attack(const AttackView& view, std::span<const double> delta,
                                    double gamma0, const SearchOptions& options);

// One independently drawn update per malicious agent.
std::vector<ParamVector> trim_attack(const AttackView& view, Rng& rng);

// Dispatch for the model-poisoning kinds; one update per malicious agent.
std::vector<ParamVector> craft_malicious_updates(const AttackSpec& spec, const AttackView& view,
                                                 Rng& rng);

}  // namespace frl
