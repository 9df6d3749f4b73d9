#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bremen/dataset.hpp"
#include "bremen/dynamics.hpp"
#include "bremen/policy.hpp"
#include "bremen/tensor.hpp"

namespace bremen {

double normal_cdf(double x);

/// Differential entropy of a diagonal Gaussian: sum log(sigma sqrt(2 pi e)).
double gaussian_entropy(const Vector& sigma);

double gaussian_kl_1d(double mu_a, double sigma_a, double mu_b, double sigma_b);

/// TV between two 1-D Gaussians by trapezoid integration of |p - q| / 2 on a uniform
/// grid spanning both means +- 8 sigma.
double gaussian_tv_1d_numeric(double mu_a, double sigma_a, double mu_b, double sigma_b,
                              std::size_t points = 100000);

/// Exact TV between N(a, diag(s^2)) and N(b, diag(s^2)): 2 Phi(|(a - b) / s| / 2) - 1.
double gaussian_tv_shared_sigma(const Vector& mean_a, const Vector& mean_b, const Vector& sigma);

/// Per-state TV between two policies' pre-clip Gaussians. Exact when both share sigma;
/// otherwise the max over dims of the numeric 1-D TV (a lower bound).
Vector policy_tv(const GaussianMlpPolicy& pa, const GaussianMlpPolicy& pb, const Matrix& states);

struct GaussianPair {
  Vector mu_a, sigma_a;
  Vector mu_b, sigma_b;
};

struct PinskerResult {
  std::size_t violations = 0;
  std::size_t pairs = 0;
  double max_tv_minus_bound = -1.0;  // max of TV - sqrt(KL / 2)
  std::vector<double> tv;
  std::vector<double> kl;
};

/// Counts pairs with TV > sqrt(KL / 2) + tolerance. KL is closed form; TV is numeric
/// (exact in 1-D, per-dim max lower bound in higher dims).
PinskerResult pinsker_tv_check(std::span<const GaussianPair> pairs, double tolerance = 1e-9);

struct LossEpsilons {
  double eps_beta = 0.0;  // sup_s E[||a - pi_bc(s)||^2 / 2] - H(pi_b)
  double eps_phi = 0.0;   // sup_{s,a} E[||s' - f(s, a)||^2 / 2] - H(p)
  double max_bc_half_sq = 0.0;
  double max_model_half_sq = 0.0;
  std::size_t state_groups = 0;
  std::size_t state_action_groups = 0;
};

/// Supremum terms are maxima over the dataset. Transitions with bitwise-identical
/// states (or state-action pairs) are grouped and their losses averaged first. The
/// model term is maximised over ensemble members too.
LossEpsilons estimate_loss_epsilons(const Dataset& d, const MlpParams& bc_net,
                                    const DynamicsEnsemble& ensemble, double behavior_entropy,
                                    double dynamics_entropy);

struct Prop1Bounds {
  double policy_shift = 0.0;  // bound on eps_pi
  double model_error = 0.0;   // bound on eps_m
};

/// eps_pi <= sqrt(eps_beta / 2 + log(2 pi) / 4) + T sqrt(delta / 2),
/// eps_m  <= sqrt(eps_phi / 2 + log(2 pi) / 4). Negative radicands throw.
Prop1Bounds proposition1_bounds(double eps_beta, double eps_phi, double steps, double delta);

/// 2 gamma r_max (eps_m + 2 eps_pi) / (1 - gamma)^2 + 4 r_max eps_pi / (1 - gamma).
double return_gap_penalty(double eps_m, double eps_pi, double gamma, double r_max);
/// Lower bound on the true return given the model return.
double return_gap_bound(double model_return, double eps_m, double eps_pi, double gamma, double r_max);

struct BoundReport {
  LossEpsilons epsilons;
  double behavior_entropy = 0.0;
  double dynamics_entropy = 0.0;
  bool entropy_assumed_zero = false;
  Prop1Bounds bounds;
  double measured_tv_behavior_to_final = 0.0;  // empirical sup proxy over dataset states
  double max_step_tv = 0.0;                    // largest accepted per-step TV
  double per_step_tv_limit = 0.0;              // sqrt(delta / 2)
  double cumulative_step_tv = 0.0;
  double model_return = 0.0;
  double return_gap_penalty = 0.0;
  double true_return_lower_bound = 0.0;
  double r_max = 0.0;
  double gamma = 0.0;
  double steps = 0.0;
  double delta = 0.0;
  std::size_t pinsker_pairs = 0;
  std::size_t pinsker_violations = 0;
};

nlohmann::json to_json(const BoundReport& report);

}  // namespace bremen
