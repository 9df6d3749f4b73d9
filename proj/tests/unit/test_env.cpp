#include <doctest.h>

#include <cmath>
#include <numbers>

#include "bremen/env.hpp"
#include "bremen/lqr.hpp"
#include "bremen/rng.hpp"

using namespace bremen;

TEST_SUITE("env") {

TEST_CASE("reset is deterministic under a seed and varies across seeds") {
  for (const char* id : {"pointmass", "pendulum", "gatewalker"}) {
    const auto spec = make_env_spec(id);
    CHECK(env_reset(spec, 42).state == env_reset(spec, 42).state);
    CHECK(env_reset(spec, 42).state != env_reset(spec, 43).state);
    CHECK(env_reset(spec, 42).step == 0);
  }
}

TEST_CASE("pendulum reset ranges") {
  const auto spec = make_env_spec("pendulum");
  for (std::uint64_t s = 0; s < 500; ++s) {
    const auto st = env_reset(spec, s);
    CHECK(std::abs(st.state[0]) <= std::numbers::pi);
    CHECK(std::abs(st.state[1]) <= 1.0);
  }
}

TEST_CASE("pointmass origin is a fixed point with zero reward") {
  const auto spec = make_env_spec("pointmass");
  EnvState st{Vector::Zero(4), 0};
  const auto r = env_step(spec, st, Vector::Zero(2));
  CHECK(r.next.state.isZero(0.0));
  CHECK(r.reward == 0.0);
  CHECK_FALSE(r.done);
  CHECK(reward_fn(spec, Vector::Zero(4), Vector::Zero(2)) == 0.0);
}

TEST_CASE("termination predicates") {
  const auto pm = make_env_spec("pointmass");
  Rng rng(1);
  for (int i = 0; i < 100; ++i) CHECK_FALSE(termination_fn(pm, rng.normal_vector(4) * 100.0));
  const auto gw = make_env_spec("gatewalker");
  const auto& p = std::get<GateWalkerParams>(gw.params);
  Vector s(4);
  s << 0.0, 0.0, p.band_low - 1e-9, 0.0;
  CHECK(termination_fn(gw, s));
  s[2] = p.band_high + 1e-9;
  CHECK(termination_fn(gw, s));
  s[2] = p.rest_height;
  CHECK_FALSE(termination_fn(gw, s));
}

TEST_CASE("gatewalker reward at unit forward speed") {
  const auto gw = make_env_spec("gatewalker");
  Vector s(4);
  s << 0.3, 1.0, 1.0, 0.0;
  CHECK(reward_fn(gw, s, Vector::Zero(2)) == doctest::Approx(2.0));
  Vector a(2);
  a << 1.0, -1.0;
  CHECK(reward_fn(gw, s, a) == doctest::Approx(2.0 - 0.002));
}

TEST_CASE("damped pendulum never gains energy without torque") {
  auto spec = make_env_spec("pendulum", 1000);
  std::get<PendulumParams>(spec.params).damping = 0.1;
  const auto& p = std::get<PendulumParams>(spec.params);
  EnvState st{Vector(2), 0};
  st.state << 2.5, 0.5;
  double e = pendulum_energy(p, st.state);
  for (int t = 0; t < 1000; ++t) {
    st = env_step(spec, st, Vector::Zero(1)).next;
    const double e2 = pendulum_energy(p, st.state);
    CHECK(e2 <= e + 1e-12);
    e = e2;
  }
}

TEST_CASE("step is pure, clips actions and rejects bad actions") {
  const auto spec = make_env_spec("pointmass");
  const auto st = env_reset(spec, 7);
  Vector a(2);
  a << 3.0, -0.2;
  const auto r1 = env_step(spec, st, a);
  const auto r2 = env_step(spec, st, a);
  CHECK(r1.next.state == r2.next.state);
  CHECK(r1.reward == r2.reward);
  Vector clipped(2);
  clipped << 1.0, -0.2;
  CHECK(env_step(spec, st, clipped).next.state == r1.next.state);
  Vector bad(2);
  bad << 0.0, std::nan("");
  CHECK_THROWS_AS(env_step(spec, st, bad), NumericError);
  CHECK_THROWS_AS(env_step(spec, st, Vector::Zero(3)), ShapeError);
}

TEST_CASE("horizon ends the episode") {
  const auto spec = make_env_spec("pendulum", 3);
  auto st = env_reset(spec, 0);
  for (int t = 0; t < 3; ++t) {
    const auto r = env_step(spec, st, Vector::Zero(1));
    CHECK(r.done == (t == 2));
    st = r.next;
  }
  CHECK_THROWS(make_env_spec("pendulum", 0));
  CHECK_THROWS(make_env_spec("cartpole"));
}

TEST_CASE("env counts real steps only") {
  Env env(make_env_spec("pointmass"));
  const auto st = env.reset(0);
  (void)env.reward(st.state, Vector::Zero(2));
  (void)env.terminal(st.state);
  CHECK(env.step_count() == 0);
  (void)env.step(st, Vector::Zero(2));
  CHECK(env.step_count() == 1);
  CHECK(env.reward_calls() == 1);
}

TEST_CASE("scalar Riccati fixed point") {
  LinearSystem sys{DMat::Ones(1, 1), DMat::Ones(1, 1), DMat::Ones(1, 1), DMat::Ones(1, 1)};
  const double g = 0.99;
  // p = q + g p - g^2 p^2 / (r + g p)  <=>  g p^2 + (1 - 2g) p - 1 = 0
  const double p = (-(1.0 - 2.0 * g) + std::sqrt((1.0 - 2.0 * g) * (1.0 - 2.0 * g) + 4.0 * g)) / (2.0 * g);
  const auto sol = solve_discounted_riccati(sys, g);
  CHECK(sol.cost_to_go(0, 0) == doctest::Approx(p).epsilon(1e-9));
  CHECK(sol.gain(0, 0) == doctest::Approx(g * p / (1.0 + g * p)).epsilon(1e-9));
}

TEST_CASE("zero state cost gives zero optimal return") {
  auto spec = make_env_spec("pointmass");
  std::get<PointMassParams>(spec.params).q_diag.setZero();
  CHECK(oracle_optimal_return(spec, 0.99, 50) == doctest::Approx(0.0));
}

TEST_CASE("oracle return is the mean of -s'Ps over the reset states") {
  const auto spec = make_env_spec("pointmass");
  const auto sol = solve_discounted_riccati(pointmass_system(spec), 0.99);
  double acc = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Vector s = env_reset(spec, static_cast<std::uint64_t>(i)).state;
    acc += -s.dot(sol.cost_to_go * s);
  }
  CHECK(oracle_optimal_return(spec, 0.99) == doctest::Approx(acc / 1000.0).epsilon(1e-12));
}

TEST_CASE("oracle dominates random linear policies") {
  const int horizon = 2500;  // 0.99^2500 makes truncation negligible
  const auto spec = make_env_spec("pointmass", horizon);
  const double gamma = 0.99;
  const auto sol = solve_discounted_riccati(pointmass_system(spec), gamma);
  Rng rng(99);
  for (int k = 0; k < 10; ++k) {
    DMat gain(2, 4);
    for (Eigen::Index i = 0; i < gain.size(); ++i) gain.data()[i] = rng.uniform(0.0, 1.5);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto st = env_reset(spec, seed);
      const double opt = -st.state.dot(sol.cost_to_go * st.state);
      double ret = 0.0, disc = 1.0;
      for (int t = 0; t < horizon; ++t) {
        const Vector a = -(gain * st.state);
        const auto r = env_step(spec, st, a);
        ret += disc * r.reward;
        disc *= gamma;
        st = r.next;
        if (!std::isfinite(ret) || ret < -1e12) break;
      }
      CHECK(opt >= ret - 1e-6);
    }
  }
}

}
