#include "frl/aggregators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace frl {

AggregatorKind parse_aggregator(std::string_view key) {
  if (key == "fedavg") return AggregatorKind::fedavg;
  if (key == "trimmed_mean") return AggregatorKind::trimmed_mean;
  if (key == "coord_median" || key == "median") return AggregatorKind::coord_median;
  if (key == "geometric_median") return AggregatorKind::geometric_median;
  if (key == "flame") return AggregatorKind::flame;
  if (key == "fedpg_br") return AggregatorKind::fedpg_br;
  throw std::invalid_argument("unknown aggregator: " + std::string(key));
}

std::string aggregator_key(AggregatorKind kind) {
  switch (kind) {
    case AggregatorKind::fedavg: return "fedavg";
    case AggregatorKind::trimmed_mean: return "trimmed_mean";
    case AggregatorKind::coord_median: return "coord_median";
    case AggregatorKind::geometric_median: return "geometric_median";
    case AggregatorKind::flame: return "flame";
    case AggregatorKind::fedpg_br: return "fedpg_br";
  }
  return "?";
}

void AggregatorSpec::validate(std::size_t n) const {
  if (n == 0) throw std::invalid_argument("aggregation over zero updates");
  switch (kind) {
    case AggregatorKind::trimmed_mean:
      if (2 * trim_c >= n) throw std::invalid_argument("trimmed_mean requires 2c < n");
      break;
    case AggregatorKind::geometric_median:
      if (!(gm_eps > 0.0)) throw std::invalid_argument("geometric_median requires eps > 0");
      break;
    case AggregatorKind::flame:
      if (n < 3) throw std::invalid_argument("flame requires n >= 3");
      if (flame_lambda < 0.0) throw std::invalid_argument("flame noise must be >= 0");
      break;
    case AggregatorKind::fedpg_br:
      if (fedpg_b < 1) throw std::invalid_argument("fedpg_br requires b >= 1");
      if (!(fedpg_delta > 0.0 && fedpg_delta < 1.0))
        throw std::invalid_argument("fedpg_br requires 0 < delta < 1");
      if (!(fedpg_sigma > 0.0)) throw std::invalid_argument("fedpg_br requires sigma > 0");
      break;
    default:
      break;
  }
}

ParamVector fedavg(std::span<const ParamVector> updates) {
  if (updates.empty()) throw std::invalid_argument("fedavg over zero updates");
  return mean_of(updates);
}

ParamVector trimmed_mean(std::span<const ParamVector> updates, std::size_t c) {
  const std::size_t n = updates.size();
  if (n <= 2 * c) throw std::invalid_argument("trimmed_mean requires n > 2c");
  const std::size_t d = updates.front().size();
  ParamVector out(d);
  std::vector<double> column(n);
  for (std::size_t k = 0; k < d; ++k) {
    for (std::size_t i = 0; i < n; ++i) column[i] = updates[i][k];
    std::sort(column.begin(), column.end());
    double s = 0.0;
    for (std::size_t i = c; i < n - c; ++i) s += column[i];
    out[k] = s / static_cast<double>(n - 2 * c);
  }
  return out;
}

ParamVector coord_median(std::span<const ParamVector> updates) {
  const std::size_t n = updates.size();
  if (n == 0) throw std::invalid_argument("median over zero updates");
  const std::size_t d = updates.front().size();
  ParamVector out(d);
  std::vector<double> column(n);
  for (std::size_t k = 0; k < d; ++k) {
    for (std::size_t i = 0; i < n; ++i) column[i] = updates[i][k];
    std::sort(column.begin(), column.end());
    out[k] = n % 2 == 1 ? column[n / 2] : 0.5 * (column[n / 2 - 1] + column[n / 2]);
  }
  return out;
}

double geometric_median_objective(std::span<const ParamVector> points, std::span<const double> z) {
  double s = 0.0;
  for (const auto& p : points) s += distance(p, z);
  return s;
}

ParamVector geometric_median(std::span<const ParamVector> points, double eps,
                             std::size_t max_iters) {
  if (points.empty()) throw std::invalid_argument("geometric median of zero points");
  const std::size_t d = points.front().size();
  const double coincide = eps / 10.0;

  ParamVector z = mean_of(points);
  ParamVector next(d);
  ParamVector residual(d);
  for (std::size_t it = 0; it < max_iters; ++it) {
    std::fill(next.begin(), next.end(), 0.0);
    std::fill(residual.begin(), residual.end(), 0.0);
    double weight = 0.0;
    std::size_t multiplicity = 0;
    const ParamVector* anchor = nullptr;
    for (const auto& p : points) {
      const double dist = distance(p, z);
      if (dist < coincide) {
        ++multiplicity;
        anchor = &p;
        continue;
      }
      const double inv = 1.0 / dist;
      weight += inv;
      for (std::size_t k = 0; k < d; ++k) {
        next[k] += p[k] * inv;
        residual[k] += (p[k] - z[k]) * inv;
      }
    }
    if (weight == 0.0) return anchor != nullptr ? *anchor : z;
    for (double& v : next) v /= weight;

    if (multiplicity > 0) {
      // Subgradient optimality at a data point: |R| <= multiplicity.
      const double r = norm(residual);
      const double eta = static_cast<double>(multiplicity);
      if (r <= eta) return *anchor;
      const double keep = eta / r;
      for (std::size_t k = 0; k < d; ++k) next[k] = (1.0 - keep) * next[k] + keep * z[k];
    }

    const double moved = distance(next, z);
    z.swap(next);
    if (moved < eps) break;
  }
  return z;
}

namespace {

struct DisjointSets {
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  std::vector<std::size_t> parent;
};

// Members of the largest single-linkage component at radius r; ties go to
// the component holding the smallest index.
std::vector<std::size_t> largest_component(const std::vector<std::vector<double>>& dist,
                                           double r) {
  const std::size_t n = dist.size();
  DisjointSets sets(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (dist[i][j] <= r) sets.unite(i, j);
  std::vector<std::size_t> size(n, 0);
  for (std::size_t i = 0; i < n; ++i) ++size[sets.find(i)];
  std::size_t best = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (size[i] > size[best]) best = i;
  std::vector<std::size_t> members;
  for (std::size_t i = 0; i < n; ++i)
    if (sets.find(i) == best) members.push_back(i);
  return members;
}

}  // namespace

FlameOutcome flame(std::span<const ParamVector> updates, double noise_lambda, Rng& rng) {
  const std::size_t n = updates.size();
  if (n < 3) throw std::invalid_argument("flame requires n >= 3");

  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) norms[i] = norm(updates[i]);

  // Cosine distance; zero vectors sit at distance 1 from everything else.
  std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
  std::vector<double> radii;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double dij = 1.0;
      if (norms[i] > 0.0 && norms[j] > 0.0)
        dij = 1.0 - dot(updates[i], updates[j]) / (norms[i] * norms[j]);
      else if (norms[i] == 0.0 && norms[j] == 0.0)
        dij = 0.0;
      dist[i][j] = dist[j][i] = std::max(dij, 0.0);
      radii.push_back(dist[i][j]);
    }
  }
  std::sort(radii.begin(), radii.end());
  radii.erase(std::unique(radii.begin(), radii.end()), radii.end());

  const std::size_t quorum = n / 2 + 1;
  FlameOutcome out;
  std::size_t lo = 0;
  std::size_t hi = radii.size();
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    if (largest_component(dist, radii[mid]).size() >= quorum)
      hi = mid;
    else
      lo = mid + 1;
  }
  if (lo < radii.size()) out.kept = largest_component(dist, radii[lo]);
  if (out.kept.size() < quorum) {
    out.fallback_all = true;
    out.kept.resize(n);
    std::iota(out.kept.begin(), out.kept.end(), 0);
  }

  std::vector<double> sorted_norms = norms;
  std::sort(sorted_norms.begin(), sorted_norms.end());
  out.clip_norm = n % 2 == 1 ? sorted_norms[n / 2]
                             : 0.5 * (sorted_norms[n / 2 - 1] + sorted_norms[n / 2]);

  const std::size_t d = updates.front().size();
  out.aggregate.assign(d, 0.0);
  for (std::size_t i : out.kept) {
    const double factor = norms[i] > out.clip_norm ? out.clip_norm / norms[i] : 1.0;
    axpy(factor, updates[i], out.aggregate);
  }
  for (double& v : out.aggregate) v /= static_cast<double>(out.kept.size());
  const double noise_std = noise_lambda * out.clip_norm;
  if (noise_std > 0.0)
    for (double& v : out.aggregate) v += rng.normal(0.0, noise_std);
  return out;
}

std::vector<std::size_t> fedpg_br_filter(std::span<const ParamVector> updates,
                                         std::span<const double> median, double sigma) {
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < updates.size(); ++i) {
    if (distance(updates[i], median) <= 2.0 * sigma && dot(updates[i], median) >= 0.0)
      kept.push_back(i);
  }
  return kept;
}

FedPgBrOutcome fedpg_br_steps(std::span<const ParamVector> updates, std::span<const double> theta,
                              const AggregatorSpec& spec, double lr,
                              const GradientEstimator& server_gradient, std::uint64_t inner_steps,
                              Rng& rng) {
  if (!(lr > 0.0)) throw std::invalid_argument("fedpg_br requires a positive learning rate");
  FedPgBrOutcome out;
  out.median = geometric_median(updates, spec.gm_eps, spec.gm_max_iters);
  out.kept = fedpg_br_filter(updates, out.median, spec.fedpg_sigma);

  ParamVector mu;
  if (out.kept.empty()) {
    mu = out.median;
  } else {
    mu.assign(out.median.size(), 0.0);
    for (std::size_t i : out.kept) axpy(1.0, updates[i], mu);
    for (double& v : mu) v /= static_cast<double>(out.kept.size());
  }

  // SCSG inner loop anchored at theta.
  const ParamVector anchor(theta.begin(), theta.end());
  ParamVector current = anchor;
  out.inner_steps = inner_steps;
  for (std::uint64_t j = 0; j < inner_steps; ++j) {
    const std::uint64_t seed = rng.next_u64();
    const ParamVector at_current = server_gradient(current, current, seed);
    const ParamVector at_anchor =
        server_gradient(spec.fedpg_reuse ? current : anchor, anchor, seed);
    for (std::size_t k = 0; k < current.size(); ++k)
      current[k] += lr * (at_current[k] - at_anchor[k] + mu[k]);
    out.server_trajectories += (spec.fedpg_reuse ? 1 : 2) * spec.fedpg_b;
    if (!all_finite(current))
      throw std::runtime_error("fedpg_br: non-finite inner iterate at step " + std::to_string(j));
  }
  out.applied = difference(current, anchor);
  for (double& v : out.applied) v /= lr;
  return out;
}

FedPgBrOutcome fedpg_br(std::span<const ParamVector> updates, std::span<const double> theta,
                        const AggregatorSpec& spec, double lr, std::size_t batch_size,
                        const GradientEstimator& server_gradient, Rng& rng) {
  // N ~ Geom(p = B/(B+b)) on {1, 2, ...}: E[N] = (B+b)/B.
  const double success =
      static_cast<double>(batch_size) / static_cast<double>(batch_size + spec.fedpg_b);
  const std::uint64_t steps = rng.trials_until_success(success);
  return fedpg_br_steps(updates, theta, spec, lr, server_gradient, steps, rng);
}

ParamVector aggregate(const AggregatorSpec& spec, std::span<const ParamVector> updates,
                      const AggregationContext& ctx, AggregationStats* stats) {
  spec.validate(updates.size());
  AggregationStats local;
  ParamVector out;
  switch (spec.kind) {
    case AggregatorKind::fedavg:
      out = fedavg(updates);
      local.kept = updates.size();
      break;
    case AggregatorKind::trimmed_mean:
      out = trimmed_mean(updates, spec.trim_c);
      local.kept = updates.size() - 2 * spec.trim_c;
      break;
    case AggregatorKind::coord_median:
      out = coord_median(updates);
      local.kept = updates.size();
      break;
    case AggregatorKind::geometric_median:
      out = geometric_median(updates, spec.gm_eps, spec.gm_max_iters);
      local.kept = updates.size();
      break;
    case AggregatorKind::flame: {
      Rng rng(ctx.seed);
      FlameOutcome f = flame(updates, spec.flame_lambda, rng);
      out = std::move(f.aggregate);
      local.kept = f.kept.size();
      local.fallback = f.fallback_all;
      break;
    }
    case AggregatorKind::fedpg_br: {
      if (ctx.server_gradient == nullptr)
        throw std::invalid_argument("fedpg_br requires a server gradient estimator");
      Rng rng(ctx.seed);
      FedPgBrOutcome f =
          fedpg_br(updates, ctx.theta, spec, ctx.lr, ctx.batch_size, *ctx.server_gradient, rng);
      out = std::move(f.applied);
      local.kept = f.kept.size();
      local.fallback = f.kept.empty();
      local.server_trajectories = f.server_trajectories;
      break;
    }
  }
  if (stats != nullptr) *stats = local;
  return out;
}

}  // namespace frl
