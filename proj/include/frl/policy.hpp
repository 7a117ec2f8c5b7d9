#pragma once

#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "frl/envs.hpp"
#include "frl/rng.hpp"
#include "frl/vecops.hpp"

namespace frl {

struct NumericFault : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Activation { relu, tanh };

struct ArchSpec {
  std::size_t input_dim = EnvConfig::kObservationDim;
  std::vector<std::size_t> hidden{16, 16};
  Activation hidden_activation = Activation::relu;
  ActionSpace actions = ActionSpace::discrete(2);
  // Skip the tanh on categorical logits.
  bool raw_logits = false;

  std::size_t output_dim() const { return actions.is_discrete() ? actions.count : actions.dim; }
  // Weights + biases of every layer, plus one log-std per dimension for gaussian heads.
  std::size_t param_count() const;

  // Cart-pole: 16,16 relu; continuous variant: 64,64 tanh.
  static ArchSpec for_env(const EnvConfig& env);

  bool operator==(const ArchSpec&) const = default;
};

// Categorical: `probs`. Gaussian: `mean` and `stddev` per action dimension.
struct ActionDistribution {
  std::vector<double> probs;
  std::vector<double> mean;
  std::vector<double> stddev;
};

// Fixed-topology MLP evaluated over an external flat parameter vector. All
// methods are const and thread-safe given a per-thread Scratch.
class MlpPolicy {
 public:
  struct Scratch {
    std::vector<std::vector<double>> activations;  // [0] = input
    std::vector<double> output;                    // post-tanh (or raw) head output
    std::vector<double> delta;
    std::vector<double> delta_next;
    ActionDistribution dist;
  };

  explicit MlpPolicy(ArchSpec arch);

  const ArchSpec& arch() const { return arch_; }
  std::size_t param_count() const { return param_count_; }

  // Glorot-uniform weights; zero biases and log-std.
  ParamVector init_params(Rng& rng) const;

  ActionDistribution distribution(std::span<const double> theta, std::span<const double> s) const;
  const ActionDistribution& forward(std::span<const double> theta, std::span<const double> s,
                                    Scratch& scratch) const;

  Action sample_action(std::span<const double> theta, std::span<const double> s, Rng& rng) const;
  Action sample_from(const ActionDistribution& dist, Rng& rng) const;
  // Argmax with ties to the smaller index, or the clamped gaussian mean.
  Action greedy_action(std::span<const double> theta, std::span<const double> s) const;
  Action greedy_from(const ActionDistribution& dist) const;

  double log_prob(std::span<const double> theta, std::span<const double> s, const Action& a) const;
  ParamVector logprob_grad(std::span<const double> theta, std::span<const double> s,
                           const Action& a) const;
  // out += scale * grad log pi(a|s), reusing the activations cached by the
  // preceding forward() on the same scratch.
  void accumulate_logprob_grad(std::span<const double> theta, const Action& a, double scale,
                               std::span<double> out, Scratch& scratch) const;

 private:
  struct Layer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t weight_offset = 0;
    std::size_t bias_offset = 0;
  };

  ArchSpec arch_;
  std::vector<Layer> layers_;
  std::size_t log_std_offset_ = 0;
  std::size_t param_count_ = 0;
};

// Checkpoint files: little-endian u64 parameter count followed by that many
// little-endian IEEE-754 doubles.
void save_params(const std::filesystem::path& path, std::span<const double> theta);
ParamVector load_params(const std::filesystem::path& path);

// JSON descriptor record stored next to parameter files.
std::string arch_descriptor(const ArchSpec& arch);
ArchSpec parse_arch_descriptor(std::string_view json);

}  // namespace frl
