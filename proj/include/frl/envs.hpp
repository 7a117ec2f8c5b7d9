#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "frl/rng.hpp"

namespace frl {

// Discrete actions are indices; continuous actions are real vectors.
using Action = std::variant<std::size_t, std::vector<double>>;

struct ActionSpace {
  enum class Kind { discrete, continuous };

  Kind kind = Kind::discrete;
  std::size_t count = 2;  // discrete: number of actions
  std::size_t dim = 1;    // continuous: dimension
  double lo = -1.0;       // continuous: per-dimension bounds
  double hi = 1.0;

  static ActionSpace discrete(std::size_t m) { return {Kind::discrete, m, 0, 0.0, 0.0}; }
  static ActionSpace continuous(std::size_t dim, double lo, double hi) {
    return {Kind::continuous, 0, dim, lo, hi};
  }
  bool is_discrete() const { return kind == Kind::discrete; }
  bool operator==(const ActionSpace&) const = default;
};

enum class EnvKind { cartpole, cartpole_continuous };

struct EnvConfig {
  EnvKind kind = EnvKind::cartpole;
  double gravity = 9.8;
  double cart_mass = 1.0;
  double pole_mass = 0.1;
  double pole_half_length = 0.5;
  double force_mag = 10.0;
  double dt = 0.02;
  int episode_cap = 500;
  double reward_noise_var = 0.0;

  static constexpr double kThetaLimit = 12.0 * 3.14159265358979323846 / 180.0;
  static constexpr double kXLimit = 2.4;
  static constexpr double kContinuousBound = 3.0;
  static constexpr std::size_t kObservationDim = 4;

  static EnvConfig cartpole();
  static EnvConfig cartpole_continuous();

  ActionSpace action_space() const;
};

// Accepts "cartpole" and "cartpole_continuous".
EnvConfig make_env(std::string_view key);
std::string env_key(EnvKind kind);

struct EnvState {
  double x = 0.0;
  double x_dot = 0.0;
  double theta = 0.0;
  double theta_dot = 0.0;
  int steps_elapsed = 0;

  std::array<double, 4> observation() const { return {x, x_dot, theta, theta_dot}; }
  bool operator==(const EnvState&) const = default;
};

struct StepResult {
  EnvState next;
  double reward = 0.0;
  bool done = false;
};

bool is_terminal(const EnvConfig& env, const EnvState& s);

// Each state component is drawn from `source.uniform(-0.05, 0.05)`.
template <class UniformSource>
EnvState reset(const EnvConfig& /*env*/, UniformSource& source) {
  EnvState s;
  s.x = source.uniform(-0.05, 0.05);
  s.x_dot = source.uniform(-0.05, 0.05);
  s.theta = source.uniform(-0.05, 0.05);
  s.theta_dot = source.uniform(-0.05, 0.05);
  return s;
}

// `noise` is only consulted when reward_noise_var > 0 and may be null otherwise.
// Throws std::logic_error when `s` is already terminal.
StepResult step(const EnvConfig& env, const EnvState& s, const Action& a, Rng* noise = nullptr);

double max_episode_reward(const EnvConfig& env);

}  // namespace frl
