#include "frl/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace frl {

AttackKind parse_attack(std::string_view key) {
  if (key == "none") return AttackKind::none;
  if (key == "random_action") return AttackKind::random_action;
  if (key == "random_noise") return AttackKind::random_noise;
  if (key == "trim") return AttackKind::trim;
  if (key == "shejwalkar") return AttackKind::shejwalkar;
  if (key == "normalized") return AttackKind::normalized;
  throw std::invalid_argument("unknown attack: " + std::string(key));
}

std::string attack_key(AttackKind kind) {
  switch (kind) {
    case AttackKind::none: return "none";
    case AttackKind::random_action: return "random_action";
    case AttackKind::random_noise: return "random_noise";
    case AttackKind::trim: return "trim";
    case AttackKind::shejwalkar: return "shejwalkar";
    case AttackKind::normalized: return "normalized";
  }
  return "?";
}

Knowledge parse_knowledge(std::string_view key) {
  if (key == "full") return Knowledge::full;
  if (key == "partial") return Knowledge::partial;
  throw std::invalid_argument("unknown knowledge mode: " + std::string(key));
}

std::string knowledge_key(Knowledge k) { return k == Knowledge::full ? "full" : "partial"; }

Variant parse_variant(std::string_view key) {
  if (key == "I" || key == "1") return Variant::I;
  if (key == "II" || key == "2") return Variant::II;
  if (key == "III" || key == "3") return Variant::III;
  if (key == "IV" || key == "4") return Variant::IV;
  throw std::invalid_argument("unknown attack variant: " + std::string(key));
}

std::string variant_key(Variant v) {
  switch (v) {
    case Variant::I: return "I";
    case Variant::II: return "II";
    case Variant::III: return "III";
    case Variant::IV: return "IV";
  }
  return "?";
}

DeltaKind parse_delta(std::string_view key) {
  if (key == "uv") return DeltaKind::uv;
  if (key == "std") return DeltaKind::std;
  if (key == "sgn") return DeltaKind::sgn;
  throw std::invalid_argument("unknown perturbation vector: " + std::string(key));
}

std::string delta_key(DeltaKind d) {
  switch (d) {
    case DeltaKind::uv: return "uv";
    case DeltaKind::std: return "std";
    case DeltaKind::sgn: return "sgn";
  }
  return "?";
}

ParamVector AttackView::reference_aggregate() const { return aggregator(visible); }

ParamVector AttackView::attacked_aggregate(std::span<const double> crafted) const {
  if (knowledge == Knowledge::full) {
    std::vector<ParamVector> submitted(visible.begin(), visible.end());
    for (std::size_t pos : malicious_positions) submitted[pos].assign(crafted.begin(), crafted.end());
    return aggregator(submitted);
  }
  // Benign agents are unknown; the malicious agents' own benign updates stand
  // in for them, cycled to fill the n - |B| benign slots.
  if (n_agents < n_malicious || visible.empty())
    throw std::invalid_argument("partial view needs n_agents >= n_malicious and own updates");
  std::vector<ParamVector> submitted;
  submitted.reserve(n_agents);
  for (std::size_t i = 0; i < n_agents - n_malicious; ++i) submitted.push_back(visible[i % visible.size()]);
  for (std::size_t i = 0; i < n_malicious; ++i) submitted.emplace_back(crafted.begin(), crafted.end());
  return aggregator(submitted);
}

ParamVector partial_estimate(std::span<const ParamVector> malicious_updates,
                             const AggregatorOracle& aggregator) {
  if (malicious_updates.empty()) throw std::invalid_argument("partial estimate needs >= 1 update");
  return aggregator(malicious_updates);
}

ParamVector random_noise(std::size_t d, Rng& rng, double variance) {
  ParamVector g(d);
  const double sd = std::sqrt(variance);
  for (double& v : g) v = rng.normal(0.0, sd);
  return g;
}

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

ParamVector unit_or_self(std::span<const double> v) {
  const double n = norm(v);
  return n > 0.0 ? scaled(v, 1.0 / n) : ParamVector(v.begin(), v.end());
}

}  // namespace

ParamVector perturbation_vector(DeltaKind kind, std::span<const ParamVector> visible) {
  if (visible.empty()) throw std::invalid_argument("perturbation vector needs >= 1 update");
  const ParamVector avg = mean_of(visible);
  ParamVector delta(avg.size());
  switch (kind) {
    case DeltaKind::uv: {
      const double n = norm(avg);
      if (n > 0.0) {
        for (std::size_t k = 0; k < avg.size(); ++k) delta[k] = -avg[k] / n;
        break;
      }
      [[fallthrough]];
    }
    case DeltaKind::sgn:
      for (std::size_t k = 0; k < avg.size(); ++k) delta[k] = -sign(avg[k]);
      break;
    case DeltaKind::std:
      for (std::size_t k = 0; k < avg.size(); ++k) {
        double var = 0.0;
        for (const auto& g : visible) var += (g[k] - avg[k]) * (g[k] - avg[k]);
        delta[k] = -std::sqrt(var / static_cast<double>(visible.size()));
      }
      break;
  }
  return delta;
}

Deviation deviation_objective(std::span<const double> before, std::span<const double> after,
                              bool normalized) {
  if (!normalized) return {distance(before, after), false};
  const double nb = norm(before);
  const double na = norm(after);
  if (nb == 0.0 || na == 0.0) return {0.0, true};
  double s = 0.0;
  for (std::size_t k = 0; k < before.size(); ++k) {
    const double d = before[k] / nb - after[k] / na;
    s += d * d;
  }
  return {std::sqrt(s), false};
}

SearchResult decaying_search(const std::function<double(double)>& objective, double baseline,
                             double start, double step, const SearchOptions& options) {
  SearchResult r;
  auto probe = [&](double x) {
    const double v = objective(x);
    r.probes.push_back({x, v});
    if (r.probes.size() == 1 || v > r.objective) {
      r.parameter = x;
      r.objective = v;
    }
    return v;
  };

  double obj = probe(start);
  double prev = probe(baseline);
  double x = start;
  // Starting on the baseline tells nothing about the slope; go up first.
  bool up = start == baseline;
  for (std::size_t it = 0; it < options.max_iters && step >= options.tolerance; ++it) {
    x = up || obj > prev ? x + step : x - step;
    up = false;
    step /= 3.0;
    prev = obj;
    obj = probe(x);
  }
  return r;
}

NormalizedStage1 normalized_stage1(const AttackView& view, std::span<const double> delta,
                                   double lambda0, bool normalized_objective,
                                   const SearchOptions& options) {
  const ParamVector reference = view.reference_aggregate();
  const ParamVector base = unit_or_self(reference);
  ParamVector candidate(base.size());
  auto direction = [&](double lambda) {
    for (std::size_t k = 0; k < base.size(); ++k) candidate[k] = base[k] + lambda * delta[k];
    return candidate;
  };
  auto objective = [&](double lambda) {
    return deviation_objective(reference, view.attacked_aggregate(direction(lambda)),
                               normalized_objective)
        .value;
  };
  SearchResult s = decaying_search(objective, 0.0, lambda0, lambda0, options);

  NormalizedStage1 out;
  out.lambda = s.parameter;
  out.objective = s.objective;
  out.direction = direction(s.parameter);
  out.probes = std::move(s.probes);
  return out;
}

NormalizedStage2 normalized_stage2(const AttackView& view, std::span<const double> direction,
                                   double zeta0, bool normalized_objective,
                                   const SearchOptions& options) {
  const double n = norm(direction);
  if (n == 0.0) throw std::invalid_argument("stage-2 scaling of a zero direction");
  const ParamVector reference = view.reference_aggregate();
  const ParamVector unit = scaled(direction, 1.0 / n);
  auto objective = [&](double zeta) {
    return deviation_objective(reference, view.attacked_aggregate(scaled(unit, zeta)),
                               normalized_objective)
        .value;
  };
  // Start from the stage-1 magnitude so the search can only refine it; zeta = 1
  // is still probed as the baseline.
  SearchResult s = decaying_search(objective, 1.0, n, zeta0, options);

  NormalizedStage2 out;
  out.zeta = s.parameter;
  out.objective = s.objective;
  out.update = scaled(unit, s.parameter);
  out.probes = std::move(s.probes);
  return out;
}

NormalizedOutcome normalized_attack(const AttackView& view, const AttackSpec& spec) {
  const ParamVector delta = perturbation_vector(spec.delta, view.visible);
  const SearchOptions options{spec.max_iters, spec.step_tolerance};
  const bool normalized = spec.variant != Variant::III;

  NormalizedOutcome out;
  ParamVector direction;
  if (spec.variant == Variant::II) {
    const ParamVector base = unit_or_self(view.reference_aggregate());
    direction = base;
    axpy(spec.lambda0, delta, direction);
    out.lambda = spec.lambda0;
  } else {
    NormalizedStage1 s1 = normalized_stage1(view, delta, spec.lambda0, normalized, options);
    out.lambda = s1.lambda;
    out.objective = s1.objective;
    direction = std::move(s1.direction);
  }

  if (spec.variant == Variant::I || norm(direction) == 0.0) {
    out.update = std::move(direction);
    out.zeta = norm(out.update);
    return out;
  }
  NormalizedStage2 s2 = normalized_stage2(view, direction, spec.zeta0, normalized, options);
  out.zeta = s2.zeta;
  out.objective = s2.objective;
  out.update = std::move(s2.update);
  return out;
}

ShejwalkarOutcome shejwalkar_attack(const AttackView& view, std::span<const double> delta,
                                    double gamma0, const SearchOptions& options) {
  const ParamVector reference = view.reference_aggregate();
  const ParamVector avg = mean_of(view.visible);
  ParamVector candidate(avg.size());
  auto craft = [&](double gamma) {
    for (std::size_t k = 0; k < avg.size(); ++k) candidate[k] = avg[k] + gamma * delta[k];
    return candidate;
  };
  auto objective = [&](double gamma) {
    return deviation_objective(reference, view.attacked_aggregate(craft(gamma)), false).value;
  };
  SearchResult s = decaying_search(objective, 0.0, gamma0, gamma0, options);

  ShejwalkarOutcome out;
  out.gamma = s.parameter;
  out.objective = s.objective;
  out.update = craft(s.parameter);
  out.probes = std::move(s.probes);
  return out;
}

std::vector<ParamVector> trim_attack(const AttackView& view, Rng& rng) {
  const std::size_t d = view.visible.front().size();
  const ParamVector avg = mean_of(view.visible);
  std::vector<double> lo(d), hi(d);
  for (std::size_t k = 0; k < d; ++k) {
    lo[k] = hi[k] = view.visible.front()[k];
    for (const auto& g : view.visible) {
      lo[k] = std::min(lo[k], g[k]);
      hi[k] = std::max(hi[k], g[k]);
    }
  }

  std::vector<ParamVector> out(view.n_malicious, ParamVector(d));
  for (auto& g : out) {
    for (std::size_t k = 0; k < d; ++k) {
      const double spread = hi[k] - lo[k];
      const double s = sign(avg[k]);
      if (s == 0.0) {
        g[k] = avg[k];
      } else if (spread == 0.0) {
        g[k] = lo[k];
      } else if (s > 0.0) {
        g[k] = rng.uniform(lo[k] - spread, lo[k]);
      } else {
        g[k] = rng.uniform(hi[k], hi[k] + spread);
      }
    }
  }
  return out;
}

std::vector<ParamVector> craft_malicious_updates(const AttackSpec& spec, const AttackView& view,
                                                 Rng& rng) {
  if (view.n_malicious == 0) return {};
  if (view.visible.empty()) throw std::invalid_argument("attack has no visible updates");
  const std::size_t d = view.visible.front().size();
  switch (spec.kind) {
    case AttackKind::random_noise: {
      std::vector<ParamVector> out;
      for (std::size_t i = 0; i < view.n_malicious; ++i) out.push_back(random_noise(d, rng));
      return out;
    }
    case AttackKind::trim:
      return trim_attack(view, rng);
    case AttackKind::shejwalkar: {
      const ParamVector delta = perturbation_vector(spec.delta, view.visible);
      const ShejwalkarOutcome s =
          shejwalkar_attack(view, delta, spec.lambda0, {spec.max_iters, spec.step_tolerance});
      return std::vector<ParamVector>(view.n_malicious, s.update);
    }
    case AttackKind::normalized: {
      const NormalizedOutcome s = normalized_attack(view, spec);
      return std::vector<ParamVector>(view.n_malicious, s.update);
    }
    default:
      throw std::invalid_argument("attack kind does not craft updates: " + attack_key(spec.kind));
  }
}

}  // namespace frl
