#include "bremen/lqr.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace bremen {

RiccatiSolution solve_discounted_riccati(const LinearSystem& sys, double gamma, double tolerance,
                                         int max_iterations) {
  const auto n = sys.a.rows();
  if (sys.a.cols() != n || sys.b.rows() != n || sys.q.rows() != n || sys.r.rows() != sys.b.cols()) {
    throw ShapeError("riccati: inconsistent system dimensions");
  }
  DMat p = sys.q;
  for (int it = 1; it <= max_iterations; ++it) {
    const DMat bp = sys.b.transpose() * p;
    const DMat s = sys.r + gamma * bp * sys.b;
    const DMat k = gamma * s.ldlt().solve(bp * sys.a);
    const DMat next = sys.q + gamma * sys.a.transpose() * p * sys.a -
                      gamma * sys.a.transpose() * p * sys.b * k;
    const DMat sym = 0.5 * (next + next.transpose());
    if (!sym.allFinite()) throw NumericError("riccati iteration diverged");
    const double change = (sym - p).cwiseAbs().maxCoeff();
    p = sym;
    if (change <= tolerance * (1.0 + p.cwiseAbs().maxCoeff())) {
      const DMat bp2 = sys.b.transpose() * p;
      const DMat gain = gamma * (sys.r + gamma * bp2 * sys.b).ldlt().solve(bp2 * sys.a);
      return {p, gain, it};
    }
  }
  throw NumericError("riccati iteration did not converge in " + std::to_string(max_iterations) +
                     " iterations");
}

FiniteHorizonSolution solve_finite_horizon_riccati(const LinearSystem& sys, int horizon) {
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  const auto n = sys.a.rows();
  FiniteHorizonSolution sol;
  sol.gains.resize(static_cast<std::size_t>(horizon));
  DMat p = DMat::Zero(n, n);
  for (int t = horizon - 1; t >= 0; --t) {
    const DMat bp = sys.b.transpose() * p;
    const DMat k = (sys.r + bp * sys.b).ldlt().solve(bp * sys.a);
    const DMat next = sys.q + sys.a.transpose() * p * sys.a - sys.a.transpose() * p * sys.b * k;
    p = 0.5 * (next + next.transpose());
    sol.gains[static_cast<std::size_t>(t)] = k;
  }
  sol.cost_to_go = p;
  return sol;
}

LinearSystem pointmass_system(const EnvSpec& spec) {
  if (spec.id != EnvId::PointMass) throw std::invalid_argument("LQR oracle needs the pointmass env");
  const auto& p = std::get<PointMassParams>(spec.params);
  LinearSystem sys{DMat::Identity(4, 4), DMat::Zero(4, 2), DMat::Zero(4, 4), DMat::Zero(2, 2)};
  for (int axis = 0; axis < 2; ++axis) {
    sys.a(axis, axis + 2) = p.dt;
    sys.b(axis, axis) = 0.5 * p.dt * p.dt * p.force;
    sys.b(axis + 2, axis) = p.dt * p.force;
  }
  sys.q.diagonal() = p.q_diag;
  sys.r.diagonal() = p.r_diag;
  return sys;
}

double oracle_optimal_return(const EnvSpec& spec, double gamma, int samples, std::uint64_t seed) {
  if (samples < 1) throw std::invalid_argument("samples must be >= 1");
  const auto sol = solve_discounted_riccati(pointmass_system(spec), gamma);
  double total = 0.0;
  for (int i = 0; i < samples; ++i) {
    const Vector s = env_reset(spec, seed + static_cast<std::uint64_t>(i)).state;
    total -= s.dot(sol.cost_to_go * s);
  }
  return total / samples;
}

double oracle_finite_horizon_return(const EnvSpec& spec, int samples, std::uint64_t seed) {
  if (samples < 1) throw std::invalid_argument("samples must be >= 1");
  const auto sol = solve_finite_horizon_riccati(pointmass_system(spec), spec.horizon);
  double total = 0.0;
  for (int i = 0; i < samples; ++i) {
    const Vector s = env_reset(spec, seed + static_cast<std::uint64_t>(i)).state;
    total -= s.dot(sol.cost_to_go * s);
  }
  return total / samples;
}

}  // namespace bremen
