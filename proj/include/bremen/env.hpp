#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <variant>

#include "bremen/tensor.hpp"

namespace bremen {

/// 2-D double integrator. State [px, py, vx, vy], action = acceleration / force.
struct PointMassParams {
  double dt = 0.1;
  double force = 2.0;
  Vector q_diag = (Vector(4) << 1.0, 1.0, 0.1, 0.1).finished();
  Vector r_diag = (Vector(2) << 0.5, 0.5).finished();
  double reset_position = 0.5;
  double reset_velocity = 0.1;
};

/// Torque-limited pendulum. State [theta, theta_dot], theta = 0 is upright.
struct PendulumParams {
  double dt = 0.05;
  double gravity = 10.0;
  double length = 1.0;
  double max_torque = 2.0;
  double damping = 0.0;
};

/// Planar hopping toy. State [x, x_dot, height, height_dot], action [thrust, lift].
/// Forward speed and thrust both pull the body down; leaving the height band ends the episode.
struct GateWalkerParams {
  double dt = 0.05;
  double thrust_gain = 2.0;
  double drag = 0.5;
  double stiffness = 4.0;
  double height_damping = 1.0;
  double lift_gain = 1.5;
  double speed_sag = 0.1;
  double thrust_sag = 0.6;
  double rest_height = 1.0;
  double band_low = 0.7;
  double band_high = 1.3;
};

enum class EnvId { PointMass, Pendulum, GateWalker };

struct EnvSpec {
  EnvId id = EnvId::PointMass;
  std::size_t state_dim = 4;
  std::size_t action_dim = 2;
  int horizon = 200;
  std::variant<PointMassParams, PendulumParams, GateWalkerParams> params;

  std::string name() const;
  bool has_termination() const { return id == EnvId::GateWalker; }
};

/// "pointmass", "pendulum" or "gatewalker".
EnvSpec make_env_spec(const std::string& id, int horizon = 200);

struct EnvState {
  Vector state;
  int step = 0;
};

struct StepResult {
  EnvState next;
  double reward = 0.0;
  bool done = false;        // termination predicate or horizon
  bool terminated = false;  // termination predicate only
};

EnvState env_reset(const EnvSpec& spec, std::uint64_t seed);
StepResult env_step(const EnvSpec& spec, const EnvState& state, const Vector& action);

/// Pure reward r(s, a). Callable on imagined states.
double reward_fn(const EnvSpec& spec, const Vector& state, const Vector& action);
/// Pure termination predicate on a (possibly imagined) state.
bool termination_fn(const EnvSpec& spec, const Vector& state);

Vector clip_action(const Vector& action);

/// Mechanical energy of the pendulum per unit m l^2.
double pendulum_energy(const PendulumParams& p, const Vector& state);

/// The true environment. Stepping is the only way to touch the real dynamics and
/// every call is counted. Model rollouts take `const Env&`, so they cannot step it.
class Env {
 public:
  explicit Env(EnvSpec spec) : spec_(std::move(spec)) {}
  Env(const Env&) = delete;
  Env& operator=(const Env&) = delete;

  const EnvSpec& spec() const { return spec_; }
  EnvState reset(std::uint64_t seed) const { return env_reset(spec_, seed); }
  StepResult step(const EnvState& state, const Vector& action);

  double reward(const Vector& s, const Vector& a) const {
    reward_calls_.fetch_add(1);
    return reward_fn(spec_, s, a);
  }
  bool terminal(const Vector& s) const {
    termination_calls_.fetch_add(1);
    return termination_fn(spec_, s);
  }

  std::uint64_t step_count() const { return steps_.load(); }
  std::uint64_t reward_calls() const { return reward_calls_.load(); }
  std::uint64_t termination_calls() const { return termination_calls_.load(); }

 private:
  EnvSpec spec_;
  std::atomic<std::uint64_t> steps_{0};
  mutable std::atomic<std::uint64_t> reward_calls_{0};
  mutable std::atomic<std::uint64_t> termination_calls_{0};
};

}  // namespace bremen
