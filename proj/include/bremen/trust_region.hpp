#pragma once

#include <cstdint>
#include <functional>
#include <utility>

#include "bremen/dynamics.hpp"
#include "bremen/policy.hpp"
#include "bremen/tensor.hpp"

namespace bremen {

/// V(s, t) = w . psi(s, t), psi = [s, s*s, 0.01t, (0.01t)^2, (0.01t)^3, 1].
struct LinearValueFn {
  Vector weights;

  static Vector features(const Vector& state, int time);
  static Matrix features(const Matrix& states, const std::vector<int>& times);
  double operator()(const Vector& state, int time) const;
};

/// Ridge (1e-5) least squares of discounted returns-to-go on psi.
LinearValueFn fit_value_fn(const RolloutBatch& rollouts, double gamma);

/// Discounted return-to-go within each trajectory (no bootstrap).
Vector discounted_returns(const RolloutBatch& rollouts, double gamma);

struct AdvantageBatch {
  Vector raw;         // GAE before normalization
  Vector advantages;  // normalized: mean 0, std 1
  Vector value_targets;
  Vector returns;
};

/// delta_t = r_t + gamma V(s_{t+1}) - V(s_t), A_t = delta_t + gamma lambda A_{t+1}.
/// Bootstrap is 0 after termination and V(final state) after truncation.
AdvantageBatch compute_gae(const RolloutBatch& rollouts, const LinearValueFn& value_fn,
                           double gamma, double lambda);

/// Same recursion on raw per-step arrays, for callers that hold their own trajectories.
/// `values` has length n + 1 where values[n] is the bootstrap value.
Vector gae_recursion(const Vector& rewards, const Vector& values, double gamma, double lambda);

struct SurrogateResult {
  double value = 0.0;  // mean of ratio * advantage (to be maximized)
  Vector gradient;     // d value / d params of the new policy
};

SurrogateResult surrogate_and_grad(const GaussianMlpPolicy& policy_old, const MlpParams& new_params,
                                   const RolloutBatch& rollouts, const Vector& advantages);
double surrogate_value(const GaussianMlpPolicy& policy_old, const MlpParams& new_params,
                       const RolloutBatch& rollouts, const Vector& advantages);

/// (E_s[J' J] / sigma^2 + damping I) v at the policy's parameters, where J is the
/// Jacobian of the action mean tanh(mu(s)). This is the Hessian of mean KL at theta_k.
Vector fisher_vector_product(const GaussianMlpPolicy& policy, const Matrix& states, const Vector& v,
                             double damping);

struct CgResult {
  Vector x;
  double residual_norm = 0.0;
  int iterations = 0;
};

CgResult conjugate_gradient(const std::function<Vector(const Vector&)>& apply, const Vector& b,
                            int iterations, double residual_tol = 1e-10);

struct TrpoConfig {
  double max_kl = 0.05;  // delta
  int cg_iterations = 10;
  double cg_damping = 0.1;
  double backtrack_factor = 0.8;
  int max_backtracks = 10;
  double kl_slack = 1.5;  // accept only if measured mean KL <= slack * delta
  /// Also require max over rollout states of Gaussian TV(pi_k, pi_new) <= sqrt(delta / 2).
  bool enforce_state_tv = true;
};

struct TrpoStepReport {
  double surrogate_before = 0.0;
  double surrogate_improvement = 0.0;
  double mean_kl = 0.0;
  double max_state_tv = 0.0;
  int backtracks = 0;
  double cg_residual = 0.0;
  bool accepted = false;
};

std::pair<GaussianMlpPolicy, TrpoStepReport> trpo_step(const GaussianMlpPolicy& policy,
                                                       const RolloutBatch& rollouts,
                                                       const Vector& advantages,
                                                       const TrpoConfig& cfg);

/// A'(s, a) = A(s, a) - alpha * KL(pi(.|s) || pi_bc(.|s)) per rollout state.
Vector explicit_kl_advantage(const Vector& advantages, const GaussianMlpPolicy& policy,
                             const GaussianMlpPolicy& bc_policy, const Matrix& states, double alpha);

}  // namespace bremen
