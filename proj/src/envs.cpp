#include "frl/envs.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace frl {

EnvConfig EnvConfig::cartpole() { return EnvConfig{}; }

EnvConfig EnvConfig::cartpole_continuous() {
  EnvConfig env;
  env.kind = EnvKind::cartpole_continuous;
  env.episode_cap = 1000;
  return env;
}

ActionSpace EnvConfig::action_space() const {
  if (kind == EnvKind::cartpole) return ActionSpace::discrete(2);
  return ActionSpace::continuous(1, -kContinuousBound, kContinuousBound);
}

EnvConfig make_env(std::string_view key) {
  if (key == "cartpole") return EnvConfig::cartpole();
  if (key == "cartpole_continuous") return EnvConfig::cartpole_continuous();
  throw std::invalid_argument("unknown env: " + std::string(key));
}

std::string env_key(EnvKind kind) {
  return kind == EnvKind::cartpole ? "cartpole" : "cartpole_continuous";
}

bool is_terminal(const EnvConfig& env, const EnvState& s) {
  return std::abs(s.theta) > EnvConfig::kThetaLimit || std::abs(s.x) > EnvConfig::kXLimit ||
         s.steps_elapsed >= env.episode_cap;
}

StepResult step(const EnvConfig& env, const EnvState& s, const Action& a, Rng* noise) {
  if (is_terminal(env, s)) throw std::logic_error("step called on a terminal state");

  double force = 0.0;
  if (const auto* idx = std::get_if<std::size_t>(&a)) {
    if (env.kind != EnvKind::cartpole || *idx > 1)
      throw std::invalid_argument("discrete action not valid for this env");
    force = *idx == 1 ? env.force_mag : -env.force_mag;
  } else {
    const auto& v = std::get<std::vector<double>>(a);
    if (env.kind != EnvKind::cartpole_continuous || v.size() != 1)
      throw std::invalid_argument("continuous action not valid for this env");
    const double u =
        std::clamp(v[0], -EnvConfig::kContinuousBound, EnvConfig::kContinuousBound);
    force = u * env.force_mag;
  }

  // Classic cart-pole equations of motion (Barto, Sutton & Anderson).
  const double total_mass = env.cart_mass + env.pole_mass;
  const double pole_moment = env.pole_mass * env.pole_half_length;
  const double sin_t = std::sin(s.theta);
  const double cos_t = std::cos(s.theta);
  const double temp = (force + pole_moment * s.theta_dot * s.theta_dot * sin_t) / total_mass;
  const double theta_acc =
      (env.gravity * sin_t - cos_t * temp) /
      (env.pole_half_length * (4.0 / 3.0 - env.pole_mass * cos_t * cos_t / total_mass));
  const double x_acc = temp - pole_moment * theta_acc * cos_t / total_mass;

  // Explicit Euler: positions advance with the pre-step velocities.
  StepResult r;
  r.next.x = s.x + env.dt * s.x_dot;
  r.next.x_dot = s.x_dot + env.dt * x_acc;
  r.next.theta = s.theta + env.dt * s.theta_dot;
  r.next.theta_dot = s.theta_dot + env.dt * theta_acc;
  r.next.steps_elapsed = s.steps_elapsed + 1;
  r.done = is_terminal(env, r.next);

  r.reward = 1.0;
  if (env.reward_noise_var > 0.0) {
    if (noise == nullptr) throw std::invalid_argument("reward noise requires an rng");
    r.reward += noise->normal(0.0, std::sqrt(env.reward_noise_var));
  }
  return r;
}

double max_episode_reward(const EnvConfig& env) { return static_cast<double>(env.episode_cap); }

}  // namespace frl
