#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "bremen/env.hpp"

namespace bremen {

using DMat = Eigen::MatrixXd;

struct LinearSystem {
  DMat a;  // state transition
  DMat b;  // control input
  DMat q;  // state cost (reward = -(s'Qs + a'Ra))
  DMat r;  // control cost
};

struct RiccatiSolution {
  DMat cost_to_go;  // P: optimal return from s is -s'Ps
  DMat gain;        // K: optimal action -Ks
  int iterations = 0;
};

/// Discounted infinite-horizon Riccati fixed point,
/// P = Q + g A'PA - g^2 A'PB (R + g B'PB)^-1 B'PA. Throws NumericError on non-convergence.
RiccatiSolution solve_discounted_riccati(const LinearSystem& sys, double gamma,
                                         double tolerance = 1e-10, int max_iterations = 100000);

/// Undiscounted finite-horizon backward recursion; gains[t] is the gain at step t.
struct FiniteHorizonSolution {
  DMat cost_to_go;  // P_0
  std::vector<DMat> gains;
};
FiniteHorizonSolution solve_finite_horizon_riccati(const LinearSystem& sys, int horizon);

/// The point-mass env as a linear system (requires EnvId::PointMass).
LinearSystem pointmass_system(const EnvSpec& spec);

/// Discounted optimal return averaged over `samples` reset states drawn with
/// env_reset(spec, seed + i).
double oracle_optimal_return(const EnvSpec& spec, double gamma, int samples = 1000,
                             std::uint64_t seed = 0);

/// Undiscounted optimum over the env horizon (action bounds ignored, so an upper bound on
/// any bounded policy), averaged over the same reset states as evaluate_policy(seed).
double oracle_finite_horizon_return(const EnvSpec& spec, int samples, std::uint64_t seed);

}  // namespace bremen
