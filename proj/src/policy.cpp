#include "frl/policy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numbers>

namespace frl {

std::size_t ArchSpec::param_count() const {
  std::size_t total = 0;
  std::size_t in = input_dim;
  for (std::size_t width : hidden) {
    total += in * width + width;
    in = width;
  }
  total += in * output_dim() + output_dim();
  if (!actions.is_discrete()) total += actions.dim;
  return total;
}

ArchSpec ArchSpec::for_env(const EnvConfig& env) {
  ArchSpec arch;
  arch.actions = env.action_space();
  if (env.kind == EnvKind::cartpole_continuous) {
    arch.hidden = {64, 64};
    arch.hidden_activation = Activation::tanh;
  }
  return arch;
}

MlpPolicy::MlpPolicy(ArchSpec arch) : arch_(std::move(arch)) {
  std::size_t offset = 0;
  std::size_t in = arch_.input_dim;
  auto add_layer = [&](std::size_t out) {
    Layer l{in, out, offset, offset + in * out};
    offset += in * out + out;
    layers_.push_back(l);
    in = out;
  };
  for (std::size_t width : arch_.hidden) add_layer(width);
  add_layer(arch_.output_dim());
  log_std_offset_ = offset;
  if (!arch_.actions.is_discrete()) offset += arch_.actions.dim;
  param_count_ = offset;
}

ParamVector MlpPolicy::init_params(Rng& rng) const {
  ParamVector theta(param_count_, 0.0);
  for (const Layer& l : layers_) {
    const double limit = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
    for (std::size_t i = 0; i < l.in * l.out; ++i)
      theta[l.weight_offset + i] = rng.uniform(-limit, limit);
  }
  return theta;
}

const ActionDistribution& MlpPolicy::forward(std::span<const double> theta,
                                             std::span<const double> s,
                                             Scratch& scratch) const {
  if (s.size() != arch_.input_dim) throw std::invalid_argument("state dimension mismatch");
  if (theta.size() != param_count_) throw std::invalid_argument("parameter dimension mismatch");

  auto& acts = scratch.activations;
  acts.resize(layers_.size());
  acts[0].assign(s.begin(), s.end());
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const Layer& l = layers_[li];
    const bool last = li + 1 == layers_.size();
    std::vector<double>& out = last ? scratch.output : acts[li + 1];
    out.resize(l.out);
    const double* w = theta.data() + l.weight_offset;
    const double* b = theta.data() + l.bias_offset;
    const std::vector<double>& x = acts[li];
    for (std::size_t o = 0; o < l.out; ++o) {
      double z = b[o];
      const double* row = w + o * l.in;
      for (std::size_t i = 0; i < l.in; ++i) z += row[i] * x[i];
      if (!last) {
        out[o] = arch_.hidden_activation == Activation::relu ? std::max(z, 0.0) : std::tanh(z);
      } else {
        out[o] = (arch_.actions.is_discrete() && arch_.raw_logits) ? z : std::tanh(z);
      }
    }
  }

  ActionDistribution& d = scratch.dist;
  const std::vector<double>& o = scratch.output;
  if (arch_.actions.is_discrete()) {
    d.probs.resize(o.size());
    const double top = *std::max_element(o.begin(), o.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < o.size(); ++i) sum += d.probs[i] = std::exp(o[i] - top);
    for (double& p : d.probs) p /= sum;
    if (!std::isfinite(sum)) throw NumericFault("non-finite policy logits");
  } else {
    const double mid = 0.5 * (arch_.actions.lo + arch_.actions.hi);
    const double half = 0.5 * (arch_.actions.hi - arch_.actions.lo);
    d.mean.resize(o.size());
    d.stddev.resize(o.size());
    for (std::size_t i = 0; i < o.size(); ++i) {
      d.mean[i] = mid + half * o[i];
      d.stddev[i] = std::exp(theta[log_std_offset_ + i]);
      if (!std::isfinite(d.mean[i]) || !std::isfinite(d.stddev[i]))
        throw NumericFault("non-finite gaussian parameters");
    }
  }
  return d;
}

ActionDistribution MlpPolicy::distribution(std::span<const double> theta,
                                           std::span<const double> s) const {
  Scratch scratch;
  return forward(theta, s, scratch);
}

Action MlpPolicy::sample_from(const ActionDistribution& dist, Rng& rng) const {
  if (arch_.actions.is_discrete()) {
    const double u = rng.uniform(0.0, 1.0);
    double cdf = 0.0;
    for (std::size_t i = 0; i < dist.probs.size(); ++i) {
      cdf += dist.probs[i];
      if (u < cdf) return i;
    }
    // Rounding left u above the final cdf; fall back to the last positive entry.
    for (std::size_t i = dist.probs.size(); i-- > 0;)
      if (dist.probs[i] > 0.0) return i;
    return std::size_t{0};
  }
  std::vector<double> a(dist.mean.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = std::clamp(dist.mean[i] + dist.stddev[i] * rng.normal(0.0, 1.0), arch_.actions.lo,
                      arch_.actions.hi);
  }
  return a;
}

Action MlpPolicy::sample_action(std::span<const double> theta, std::span<const double> s,
                                Rng& rng) const {
  Scratch scratch;
  return sample_from(forward(theta, s, scratch), rng);
}

Action MlpPolicy::greedy_from(const ActionDistribution& dist) const {
  if (arch_.actions.is_discrete()) {
    // max_element returns the first maximum, i.e. the smaller index on ties.
    return static_cast<std::size_t>(
        std::max_element(dist.probs.begin(), dist.probs.end()) - dist.probs.begin());
  }
  std::vector<double> a(dist.mean.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    a[i] = std::clamp(dist.mean[i], arch_.actions.lo, arch_.actions.hi);
  return a;
}

Action MlpPolicy::greedy_action(std::span<const double> theta, std::span<const double> s) const {
  Scratch scratch;
  return greedy_from(forward(theta, s, scratch));
}

double MlpPolicy::log_prob(std::span<const double> theta, std::span<const double> s,
                           const Action& a) const {
  Scratch scratch;
  const ActionDistribution& d = forward(theta, s, scratch);
  if (arch_.actions.is_discrete()) return std::log(d.probs.at(std::get<std::size_t>(a)));
  const auto& v = std::get<std::vector<double>>(a);
  double lp = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double z = (v[i] - d.mean[i]) / d.stddev[i];
    lp += -0.5 * z * z - std::log(d.stddev[i]) - 0.5 * std::log(2.0 * std::numbers::pi);
  }
  return lp;
}

void MlpPolicy::accumulate_logprob_grad(std::span<const double> theta, const Action& a,
                                        double scale, std::span<double> out,
                                        Scratch& scratch) const {
  const ActionDistribution& d = scratch.dist;
  const std::vector<double>& o = scratch.output;
  std::vector<double>& delta = scratch.delta;
  delta.assign(o.size(), 0.0);

  const bool squash = !(arch_.actions.is_discrete() && arch_.raw_logits);
  if (arch_.actions.is_discrete()) {
    const std::size_t idx = std::get<std::size_t>(a);
    if (idx >= d.probs.size()) throw std::invalid_argument("action index out of range");
    for (std::size_t i = 0; i < o.size(); ++i) delta[i] = (i == idx ? 1.0 : 0.0) - d.probs[i];
  } else {
    const auto& v = std::get<std::vector<double>>(a);
    if (v.size() != d.mean.size()) throw std::invalid_argument("action dimension mismatch");
    const double half = 0.5 * (arch_.actions.hi - arch_.actions.lo);
    for (std::size_t i = 0; i < o.size(); ++i) {
      const double var = d.stddev[i] * d.stddev[i];
      const double diff = v[i] - d.mean[i];
      delta[i] = diff / var * half;
      out[log_std_offset_ + i] += scale * (diff * diff / var - 1.0);
    }
  }
  if (squash)
    for (std::size_t i = 0; i < o.size(); ++i) delta[i] *= 1.0 - o[i] * o[i];

  for (std::size_t li = layers_.size(); li-- > 0;) {
    const Layer& l = layers_[li];
    const std::vector<double>& x = scratch.activations[li];
    const double* w = theta.data() + l.weight_offset;
    double* gw = out.data() + l.weight_offset;
    double* gb = out.data() + l.bias_offset;
    for (std::size_t r = 0; r < l.out; ++r) {
      const double g = scale * delta[r];
      if (g == 0.0) continue;
      gb[r] += g;
      double* grow = gw + r * l.in;
      for (std::size_t i = 0; i < l.in; ++i) grow[i] += g * x[i];
    }
    if (li == 0) break;
    std::vector<double>& prev = scratch.delta_next;
    prev.assign(l.in, 0.0);
    for (std::size_t r = 0; r < l.out; ++r) {
      if (delta[r] == 0.0) continue;
      const double* row = w + r * l.in;
      for (std::size_t i = 0; i < l.in; ++i) prev[i] += row[i] * delta[r];
    }
    for (std::size_t i = 0; i < l.in; ++i) {
      const double act = x[i];
      prev[i] *= arch_.hidden_activation == Activation::relu ? (act > 0.0 ? 1.0 : 0.0)
                                                             : 1.0 - act * act;
    }
    std::swap(delta, prev);
  }
}

ParamVector MlpPolicy::logprob_grad(std::span<const double> theta, std::span<const double> s,
                                    const Action& a) const {
  Scratch scratch;
  forward(theta, s, scratch);
  ParamVector g(param_count_, 0.0);
  accumulate_logprob_grad(theta, a, 1.0, g, scratch);
  if (!all_finite(g)) throw NumericFault("non-finite log-probability gradient");
  return g;
}

namespace {

void write_u64_le(std::ostream& os, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(bytes, 8);
}

std::uint64_t read_u64_le(std::istream& is) {
  unsigned char bytes[8];
  is.read(reinterpret_cast<char*>(bytes), 8);
  if (!is) throw std::runtime_error("truncated parameter file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

void save_params(const std::filesystem::path& path, std::span<const double> theta) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_u64_le(os, theta.size());
  for (double v : theta) write_u64_le(os, std::bit_cast<std::uint64_t>(v));
}

ParamVector load_params(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  const std::uint64_t d = read_u64_le(is);
  ParamVector theta(d);
  for (double& v : theta) v = std::bit_cast<double>(read_u64_le(is));
  return theta;
}

std::string arch_descriptor(const ArchSpec& arch) {
  nlohmann::json j;
  j["input_dim"] = arch.input_dim;
  j["hidden"] = arch.hidden;
  j["hidden_activation"] = arch.hidden_activation == Activation::relu ? "relu" : "tanh";
  j["raw_logits"] = arch.raw_logits;
  if (arch.actions.is_discrete()) {
    j["head"] = {{"kind", "categorical"}, {"count", arch.actions.count}};
  } else {
    j["head"] = {{"kind", "gaussian"},
                 {"dim", arch.actions.dim},
                 {"lo", arch.actions.lo},
                 {"hi", arch.actions.hi}};
  }
  j["param_count"] = arch.param_count();
  return j.dump();
}

ArchSpec parse_arch_descriptor(std::string_view text) {
  const auto j = nlohmann::json::parse(text);
  ArchSpec arch;
  arch.input_dim = j.at("input_dim").get<std::size_t>();
  arch.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  arch.hidden_activation =
      j.at("hidden_activation").get<std::string>() == "relu" ? Activation::relu : Activation::tanh;
  arch.raw_logits = j.value("raw_logits", false);
  const auto& head = j.at("head");
  if (head.at("kind").get<std::string>() == "categorical") {
    arch.actions = ActionSpace::discrete(head.at("count").get<std::size_t>());
  } else {
    arch.actions = ActionSpace::continuous(head.at("dim").get<std::size_t>(),
                                           head.at("lo").get<double>(), head.at("hi").get<double>());
  }
  return arch;
}

}  // namespace frl
