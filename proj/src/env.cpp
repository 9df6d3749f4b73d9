#include "bremen/env.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "bremen/rng.hpp"

namespace bremen {

namespace {

double wrap_angle(double theta) {
  const double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(theta + std::numbers::pi, two_pi);
  if (w < 0) w += two_pi;
  return w - std::numbers::pi;
}

Vector step_pointmass(const PointMassParams& p, const Vector& s, const Vector& a) {
  Vector n(4);
  for (int axis = 0; axis < 2; ++axis) {
    const double acc = p.force * a[axis];
    n[axis] = s[axis] + p.dt * s[axis + 2] + 0.5 * p.dt * p.dt * acc;
    n[axis + 2] = s[axis + 2] + p.dt * acc;
  }
  return n;
}

// Discrete-gradient integrator: energy changes by exactly -dt * damping * w_mid^2
// plus the work done by the applied torque, so an unforced damped pendulum never gains energy.
Vector step_pendulum(const PendulumParams& p, const Vector& s, const Vector& a) {
  const double k = p.gravity / p.length;
  const double u = p.max_torque * a[0];
  const double th = s[0];
  const double w = s[1];
  const double dt = p.dt;

  // Upright at theta = 0, so gravity accelerates away from it: theta'' = k sin(theta) + u - b w.
  // Unknown: w1, with theta1 = th + dt * (w + w1) / 2.
  // Residual r(w1) = w1 - w - dt * k * G(th, th1) + dt * b * (w + w1) / 2 - dt * u,
  // G = (cos th - cos th1) / (th1 - th), the discrete gradient of 1 - cos.
  auto dgrad = [&](double th1, double* deriv) {
    const double d = th1 - th;
    if (std::abs(d) < 1e-7) {
      // Series around th1 = th: G = sin(m) * (1 - d^2/24), m = midpoint.
      const double m = 0.5 * (th + th1);
      *deriv = 0.5 * std::cos(m);
      return std::sin(m) * (1.0 - d * d / 24.0);
    }
    const double g = (std::cos(th) - std::cos(th1)) / d;
    *deriv = (std::sin(th1) - g) / d;
    return g;
  };

  double w1 = w + dt * (u + k * std::sin(th) - p.damping * w);
  for (int it = 0; it < 50; ++it) {
    const double th1 = th + 0.5 * dt * (w + w1);
    double dg = 0.0;
    const double g = dgrad(th1, &dg);
    const double res = w1 - w - dt * k * g + 0.5 * dt * p.damping * (w + w1) - dt * u;
    const double jac = 1.0 - dt * k * dg * 0.5 * dt + 0.5 * dt * p.damping;
    const double step = res / jac;
    w1 -= step;
    if (std::abs(step) < 1e-15 * (1.0 + std::abs(w1))) break;
  }
  Vector n(2);
  n[0] = th + 0.5 * dt * (w + w1);
  n[1] = w1;
  return n;
}

Vector step_gatewalker(const GateWalkerParams& p, const Vector& s, const Vector& a) {
  Vector n(4);
  const double acc_x = p.thrust_gain * a[0] - p.drag * s[1];
  const double acc_h = -p.stiffness * (s[2] - p.rest_height) - p.height_damping * s[3] +
                       p.lift_gain * a[1] - p.speed_sag * s[1] * s[1] - p.thrust_sag * a[0] * a[0];
  n[1] = s[1] + p.dt * acc_x;
  n[0] = s[0] + p.dt * n[1];
  n[3] = s[3] + p.dt * acc_h;
  n[2] = s[2] + p.dt * n[3];
  return n;
}

}  // namespace

std::string EnvSpec::name() const {
  switch (id) {
    case EnvId::PointMass: return "pointmass";
    case EnvId::Pendulum: return "pendulum";
    case EnvId::GateWalker: return "gatewalker";
  }
  return "unknown";
}

EnvSpec make_env_spec(const std::string& id, int horizon) {
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  EnvSpec spec;
  spec.horizon = horizon;
  if (id == "pointmass") {
    spec.id = EnvId::PointMass;
    spec.state_dim = 4;
    spec.action_dim = 2;
    spec.params = PointMassParams{};
  } else if (id == "pendulum") {
    spec.id = EnvId::Pendulum;
    spec.state_dim = 2;
    spec.action_dim = 1;
    spec.params = PendulumParams{};
  } else if (id == "gatewalker") {
    spec.id = EnvId::GateWalker;
    spec.state_dim = 4;
    spec.action_dim = 2;
    spec.params = GateWalkerParams{};
  } else {
    throw std::invalid_argument("unknown env id '" + id + "' (pointmass, pendulum, gatewalker)");
  }
  return spec;
}

EnvState env_reset(const EnvSpec& spec, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "env_reset"));
  EnvState st;
  switch (spec.id) {
    case EnvId::PointMass: {
      const auto& p = std::get<PointMassParams>(spec.params);
      st.state.resize(4);
      st.state[0] = rng.uniform(-p.reset_position, p.reset_position);
      st.state[1] = rng.uniform(-p.reset_position, p.reset_position);
      st.state[2] = rng.uniform(-p.reset_velocity, p.reset_velocity);
      st.state[3] = rng.uniform(-p.reset_velocity, p.reset_velocity);
      break;
    }
    case EnvId::Pendulum: {
      st.state.resize(2);
      st.state[0] = rng.uniform(-std::numbers::pi, std::numbers::pi);
      st.state[1] = rng.uniform(-1.0, 1.0);
      break;
    }
    case EnvId::GateWalker: {
      const auto& p = std::get<GateWalkerParams>(spec.params);
      st.state.resize(4);
      st.state[0] = 0.0;
      st.state[1] = rng.uniform(-0.05, 0.05);
      st.state[2] = p.rest_height + rng.uniform(-0.05, 0.05);
      st.state[3] = rng.uniform(-0.05, 0.05);
      break;
    }
  }
  return st;
}

Vector clip_action(const Vector& action) { return action.cwiseMax(-1.0).cwiseMin(1.0); }

StepResult env_step(const EnvSpec& spec, const EnvState& state, const Vector& action) {
  if (static_cast<std::size_t>(action.size()) != spec.action_dim) {
    throw ShapeError("action has " + std::to_string(action.size()) + " dims, env " + spec.name() +
                     " expects " + std::to_string(spec.action_dim));
  }
  if (!action.allFinite()) throw NumericError("non-finite action passed to env_step");
  const Vector a = clip_action(action);
  StepResult r;
  r.reward = reward_fn(spec, state.state, a);
  switch (spec.id) {
    case EnvId::PointMass:
      r.next.state = step_pointmass(std::get<PointMassParams>(spec.params), state.state, a);
      break;
    case EnvId::Pendulum:
      r.next.state = step_pendulum(std::get<PendulumParams>(spec.params), state.state, a);
      break;
    case EnvId::GateWalker:
      r.next.state = step_gatewalker(std::get<GateWalkerParams>(spec.params), state.state, a);
      break;
  }
  r.next.step = state.step + 1;
  r.terminated = termination_fn(spec, r.next.state);
  r.done = r.terminated || r.next.step >= spec.horizon;
  return r;
}

double reward_fn(const EnvSpec& spec, const Vector& s, const Vector& a) {
  switch (spec.id) {
    case EnvId::PointMass: {
      const auto& p = std::get<PointMassParams>(spec.params);
      return -(s.array().square() * p.q_diag.array()).sum() -
             (a.array().square() * p.r_diag.array()).sum();
    }
    case EnvId::Pendulum: {
      const double th = wrap_angle(s[0]);
      return -(th * th + 0.1 * s[1] * s[1] + 0.001 * a[0] * a[0]);
    }
    case EnvId::GateWalker:
      return s[1] - 0.001 * a.squaredNorm() + 1.0;
  }
  return 0.0;
}

bool termination_fn(const EnvSpec& spec, const Vector& s) {
  if (spec.id != EnvId::GateWalker) return false;
  const auto& p = std::get<GateWalkerParams>(spec.params);
  return !(s[2] >= p.band_low && s[2] <= p.band_high);
}

double pendulum_energy(const PendulumParams& p, const Vector& s) {
  return 0.5 * s[1] * s[1] + (p.gravity / p.length) * (std::cos(s[0]) - 1.0);
}

StepResult Env::step(const EnvState& state, const Vector& action) {
  steps_.fetch_add(1);
  return env_step(spec_, state, action);
}

}  // namespace bremen
