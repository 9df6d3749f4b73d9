#include <doctest.h>

#include <cmath>

#include "bremen/dynamics.hpp"
#include "bremen/rng.hpp"
#include "bremen/trust_region.hpp"
#include "oracles.hpp"

using namespace bremen;

namespace {

// Trajectories of the given lengths with random states in R^dim.
RolloutBatch synthetic_batch(const std::vector<int>& lengths, int dim, Rng& rng,
                             const std::function<double(int)>& reward, bool terminated = false) {
  int total = 0;
  for (int l : lengths) total += l;
  RolloutBatch b;
  b.states.resize(total, dim);
  b.actions = Matrix::Zero(total, 1);
  b.raw_actions = Matrix::Zero(total, 1);
  b.rewards.resize(total);
  b.log_probs = Vector::Zero(total);
  int row = 0;
  for (int l : lengths) {
    Trajectory tr;
    tr.begin = static_cast<std::size_t>(row);
    for (int t = 0; t < l; ++t, ++row) {
      for (int d = 0; d < dim; ++d) b.states(row, d) = rng.uniform(-1.0, 1.0);
      b.rewards[row] = reward(t);
      b.time_index.push_back(t);
      b.model_index.push_back(0);
    }
    tr.end = static_cast<std::size_t>(row);
    tr.terminated = terminated;
    tr.final_state = rng.uniform_vector(dim, -1.0, 1.0);
    tr.final_time = l;
    b.trajectories.push_back(tr);
  }
  return b;
}

// Policy rollouts on the true point-mass dynamics.
RolloutBatch pointmass_rollouts(const GaussianMlpPolicy& pi, std::uint64_t seed, std::size_t steps = 2000) {
  const auto spec = make_env_spec("pointmass");
  Env env(spec);
  Matrix pool(64, 4);
  for (int i = 0; i < 64; ++i) pool.row(i) = env_reset(spec, seed + static_cast<std::uint64_t>(i)).state.transpose();
  auto truth = [&](std::size_t, const Matrix& s, const Matrix& a) {
    Matrix out(s.rows(), s.cols());
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      out.row(i) = env_step(spec, {s.row(i).transpose(), 0}, a.row(i).transpose()).next.state.transpose();
    }
    return out;
  };
  return imaginary_rollout(DynamicsEnsemble{}, env, pi, pool, {50, steps}, seed, truth);
}

Vector kl_gradient(const GaussianMlpPolicy& anchor, const MlpParams& params, const Matrix& states) {
  // d/dtheta mean_s sum_d (mu_k - mu_theta)^2 / (2 sigma^2), mu = tanh(net)
  MlpTape tape;
  const Matrix mu = mlp_forward(params, states, tape).array().tanh();
  const Matrix mu_k = anchor.mean_action(states);
  Matrix up = (mu - mu_k).array() * (1.0 - mu.array().square());
  for (Eigen::Index d = 0; d < up.cols(); ++d) up.col(d) /= anchor.sigma[d] * anchor.sigma[d];
  up /= static_cast<double>(states.rows());
  return mlp_backward(params, tape, up);
}

}  // namespace

TEST_SUITE("trust_region") {

TEST_CASE("value fit of a constant reward approaches the geometric sum") {
  Rng rng(1);
  // five effective horizons; the cubic time features cannot follow a much longer plateau
  const auto b = synthetic_batch(std::vector<int>(8, 500), 2, rng, [](int) { return 1.0; });
  const auto vf = fit_value_fn(b, 0.99);
  for (int t : {0, 10, 50}) CHECK(vf(Vector::Zero(2), t) == doctest::Approx(100.0).epsilon(0.05));
}

TEST_CASE("value fit on zero rewards and least squares optimality") {
  Rng rng(2);
  const auto zero = synthetic_batch({30, 20}, 3, rng, [](int) { return 0.0; });
  CHECK(fit_value_fn(zero, 0.99).weights.norm() < 1e-6);
  const auto b = synthetic_batch({40, 25, 10}, 3, rng, [](int t) { return std::sin(0.3 * t); });
  const auto vf = fit_value_fn(b, 0.9);
  const Vector y = discounted_returns(b, 0.9);
  double res = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double e = y[i] - vf(b.states.row(i).transpose(), b.time_index[static_cast<std::size_t>(i)]);
    res += e * e;
  }
  CHECK(res <= y.squaredNorm());
}

TEST_CASE("GAE degenerate cases") {
  Rng rng(3);
  const auto b = synthetic_batch({7, 5}, 2, rng, [](int t) { return 0.5 + t; });
  LinearValueFn vf{rng.normal_vector(9)};
  const auto lambda0 = compute_gae(b, vf, 0.9, 0.0);
  for (const auto& tr : b.trajectories) {
    for (std::size_t r = tr.begin; r < tr.end; ++r) {
      const auto i = static_cast<Eigen::Index>(r);
      const double v_next = r + 1 < tr.end ? vf(b.states.row(i + 1).transpose(), b.time_index[r + 1])
                                           : vf(tr.final_state, tr.final_time);
      const double delta = b.rewards[i] + 0.9 * v_next - vf(b.states.row(i).transpose(), b.time_index[r]);
      CHECK(lambda0.raw[i] == doctest::Approx(delta).epsilon(1e-12));
    }
  }
  LinearValueFn zero{Vector::Zero(9)};
  const auto lambda1 = compute_gae(b, zero, 0.9, 1.0);
  const Vector rtg = discounted_returns(b, 0.9);
  CHECK((lambda1.raw - rtg).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("three step toy trajectory") {
  Vector r(3);
  r << 1.0, 1.0, 1.0;
  const Vector adv = gae_recursion(r, Vector::Zero(4), 0.5, 0.5);
  // A2 = 1, A1 = 1 + 0.25, A0 = 1 + 0.25 * 1.25
  CHECK(adv[2] == 1.0);
  CHECK(adv[1] == 1.25);
  CHECK(adv[0] == 1.3125);
  CHECK_THROWS_AS(gae_recursion(r, Vector::Zero(3), 0.5, 0.5), ShapeError);
}

TEST_CASE("GAE matches the recursion oracle bitwise") {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const int len = 1 + static_cast<int>(rng.index(10));
    const bool term = rng.uniform() < 0.5;
    const auto b = synthetic_batch({len}, 2, rng, [&](int) { return rng.normal(); }, term);
    LinearValueFn vf{rng.normal_vector(8)};
    const double g = rng.uniform(0.5, 0.999), l = rng.uniform(0.0, 1.0);
    std::vector<double> r(b.rewards.data(), b.rewards.data() + len), v;
    for (int t = 0; t < len; ++t) v.push_back(vf(b.states.row(t).transpose(), t));
    const auto& tr = b.trajectories[0];
    v.push_back(term ? 0.0 : vf(tr.final_state, tr.final_time));
    CHECK(compute_gae(b, vf, g, l).raw == oracle::gae(r, v, g, l));
  }
}

TEST_CASE("advantage normalisation") {
  Rng rng(5);
  const auto b = synthetic_batch({50, 30, 20}, 2, rng, [&](int) { return 3.0 + rng.normal(); });
  const auto adv = compute_gae(b, LinearValueFn{Vector::Zero(8)}, 0.99, 0.95).advantages;
  const double mean = adv.mean();
  CHECK(std::abs(mean) < 1e-10);
  CHECK(std::abs(std::sqrt((adv.array() - mean).square().mean()) - 1.0) < 1e-8);
}

TEST_CASE("surrogate at the old policy and its gradient") {
  const auto pi = GaussianMlpPolicy::random(4, 2, {16, 16}, 0.1, 3);
  const auto b = pointmass_rollouts(pi, 10, 300);
  Rng rng(6);
  const Vector adv = rng.normal_vector(static_cast<Eigen::Index>(b.steps()));
  const auto res = surrogate_and_grad(pi, pi.mean_net, b, adv);
  CHECK(res.value == doctest::Approx(adv.mean()).epsilon(1e-12));

  auto moved = pi.mean_net;
  moved.add_scaled(rng.normal_vector(static_cast<Eigen::Index>(moved.param_count())), 0.05);
  auto f = [&](const Vector& th) {
    auto q = pi.mean_net;
    q.set_flat(th);
    const Matrix mu_new = oracle::forward(q, b.states).array().tanh();
    const Matrix mu_old = pi.mean_action(b.states);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < b.states.rows(); ++i) {
      double log_ratio = 0.0;
      for (Eigen::Index d = 0; d < 2; ++d) {
        const double s2 = 2.0 * pi.sigma[d] * pi.sigma[d];
        const double x = b.raw_actions(i, d);
        log_ratio += ((x - mu_old(i, d)) * (x - mu_old(i, d)) - (x - mu_new(i, d)) * (x - mu_new(i, d))) / s2;
      }
      acc += std::exp(log_ratio) * adv[i];
    }
    return acc / static_cast<double>(b.states.rows());
  };
  const auto at = surrogate_and_grad(pi, moved, b, adv);
  CHECK(at.value == doctest::Approx(f(moved.flat())).epsilon(1e-10));
  CHECK(oracle::rel_err(at.gradient, oracle::fd_gradient(f, moved.flat())) < 1e-4);
  const auto doubled = surrogate_and_grad(pi, moved, b, 2.0 * adv);
  CHECK((doubled.gradient - 2.0 * at.gradient).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("Fisher product is the KL Hessian and is PSD") {
  const auto pi = GaussianMlpPolicy::random(4, 2, {16, 16}, 0.1, 4);
  auto anchor = pi;
  anchor.mean_net.add_scaled(Rng(1).normal_vector(static_cast<Eigen::Index>(pi.mean_net.param_count())), 0.3);
  const Matrix states = pointmass_rollouts(pi, 20, 300).states;
  const auto n = static_cast<Eigen::Index>(anchor.mean_net.param_count());
  CHECK(fisher_vector_product(anchor, states, Vector::Zero(n), 0.1).isZero(0.0));
  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const Vector v = rng.normal_vector(n);
    const double h = 1e-5;
    auto plus = anchor.mean_net, minus = anchor.mean_net;
    plus.add_scaled(v, h);
    minus.add_scaled(v, -h);
    const Vector fd = (kl_gradient(anchor, plus, states) - kl_gradient(anchor, minus, states)) / (2.0 * h);
    const Vector fvp = fisher_vector_product(anchor, states, v, 0.0);
    CHECK((fvp - fd).norm() / fd.norm() < 1e-3);
    CHECK((fisher_vector_product(anchor, states, v, 0.1) - fvp - 0.1 * v).cwiseAbs().maxCoeff() < 1e-10);
  }
  for (int trial = 0; trial < 100; ++trial) {
    const Vector v = rng.normal_vector(n);
    CHECK(v.dot(fisher_vector_product(anchor, states, v, 0.0)) >= 0.0);
  }
}

TEST_CASE("conjugate gradient on a diagonal system") {
  Vector b(2);
  b << 2.0, 4.0;
  const auto res = conjugate_gradient([](const Vector& x) { return Vector(2.0 * x); }, b, 10);
  CHECK(res.x[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(res.x[1] == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(res.iterations <= 2);
}

TEST_CASE("trust region step contract") {
  const auto pi = GaussianMlpPolicy::random(4, 2, {32, 32}, 0.1, 5);
  const auto b = pointmass_rollouts(pi, 30, 2000);
  TrpoConfig cfg;
  const auto [same, rep0] = trpo_step(pi, b, Vector::Zero(static_cast<Eigen::Index>(b.steps())), cfg);
  CHECK(same.mean_net == pi.mean_net);
  CHECK_FALSE(rep0.accepted);

  const auto vf = fit_value_fn(b, 0.99);
  const auto adv = compute_gae(b, vf, 0.99, 0.95).advantages;
  const auto [next, rep] = trpo_step(pi, b, adv, cfg);
  REQUIRE(rep.accepted);
  const double kl = mean_kl(pi, next, b.states);
  CHECK(kl > 0.0);
  CHECK(kl <= 1.5 * 0.05);
  CHECK(rep.mean_kl == doctest::Approx(kl).epsilon(1e-9));
  CHECK(rep.max_state_tv <= std::sqrt(0.05 / 2.0) + 1e-12);
  CHECK(rep.surrogate_improvement > 0.0);
  CHECK(surrogate_value(pi, next.mean_net, b, adv) > surrogate_value(pi, pi.mean_net, b, adv));
}

TEST_CASE("explicit KL penalty") {
  const auto pi = GaussianMlpPolicy::random(4, 2, {8}, 0.1, 6);
  const auto bc = GaussianMlpPolicy::random(4, 2, {8}, 0.1, 7);
  Matrix states(20, 4);
  states.setRandom();
  Rng rng(8);
  const Vector adv = rng.normal_vector(20);
  CHECK(explicit_kl_advantage(adv, pi, bc, states, 0.0) == adv);
  CHECK(explicit_kl_advantage(adv, pi, pi, states, 0.3) == adv);
  const Vector pen = explicit_kl_advantage(adv, pi, bc, states, 0.3);
  CHECK((adv - pen - 0.3 * per_state_kl(pi, bc, states)).cwiseAbs().maxCoeff() < 1e-14);
  CHECK_THROWS(explicit_kl_advantage(adv, pi, bc, states, -0.1));
}

}
