#include "bremen/theory.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>

namespace bremen {

namespace {

using BitKey = std::vector<std::uint64_t>;

void append_bits(BitKey& key, const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) key.push_back(std::bit_cast<std::uint64_t>(v[i]));
}

struct MeanAcc {
  double sum = 0.0;
  std::size_t n = 0;
};

double normal_pdf(double x, double mu, double sigma) {
  const double z = (x - mu) / sigma;
  return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

void check_sigma(double s) {
  if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("Gaussian sigma must be finite and > 0");
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double gaussian_entropy(const Vector& sigma) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    check_sigma(sigma[i]);
    h += std::log(sigma[i] * std::sqrt(2.0 * std::numbers::pi * std::numbers::e));
  }
  return h;
}

double gaussian_kl_1d(double mu_a, double sigma_a, double mu_b, double sigma_b) {
  check_sigma(sigma_a);
  check_sigma(sigma_b);
  const double d = mu_a - mu_b;
  return std::log(sigma_b / sigma_a) + (sigma_a * sigma_a + d * d) / (2.0 * sigma_b * sigma_b) - 0.5;
}

double gaussian_tv_1d_numeric(double mu_a, double sigma_a, double mu_b, double sigma_b,
                              std::size_t points) {
  check_sigma(sigma_a);
  check_sigma(sigma_b);
  if (points < 2) throw std::invalid_argument("TV integration needs at least 2 grid points");
  const double lo = std::min(mu_a - 8.0 * sigma_a, mu_b - 8.0 * sigma_b);
  const double hi = std::max(mu_a + 8.0 * sigma_a, mu_b + 8.0 * sigma_b);
  const double h = (hi - lo) / static_cast<double>(points - 1);
  double acc = 0.0;
  for (std::size_t i = 0; i < points; ++i) {
    const double x = lo + h * static_cast<double>(i);
    const double f = std::abs(normal_pdf(x, mu_a, sigma_a) - normal_pdf(x, mu_b, sigma_b));
    acc += (i == 0 || i + 1 == points) ? 0.5 * f : f;
  }
  return 0.5 * acc * h;
}

double gaussian_tv_shared_sigma(const Vector& mean_a, const Vector& mean_b, const Vector& sigma) {
  if (mean_a.size() != mean_b.size() || mean_a.size() != sigma.size()) {
    throw ShapeError("gaussian_tv_shared_sigma: dimension mismatch");
  }
  const double dist = (mean_a - mean_b).cwiseQuotient(sigma).norm();
  return 2.0 * normal_cdf(0.5 * dist) - 1.0;
}

Vector policy_tv(const GaussianMlpPolicy& pa, const GaussianMlpPolicy& pb, const Matrix& states) {
  const Matrix ma = pa.mean_action(states);
  const Matrix mb = pb.mean_action(states);
  Vector tv(states.rows());
  const bool shared = pa.sigma == pb.sigma;
  for (Eigen::Index i = 0; i < states.rows(); ++i) {
    if (shared) {
      tv[i] = gaussian_tv_shared_sigma(ma.row(i).transpose(), mb.row(i).transpose(), pa.sigma);
      continue;
    }
    double best = 0.0;
    for (Eigen::Index j = 0; j < ma.cols(); ++j) {
      best = std::max(best, gaussian_tv_1d_numeric(ma(i, j), pa.sigma[j], mb(i, j), pb.sigma[j]));
    }
    tv[i] = best;
  }
  return tv;
}

PinskerResult pinsker_tv_check(std::span<const GaussianPair> pairs, double tolerance) {
  PinskerResult out;
  out.pairs = pairs.size();
  for (const auto& p : pairs) {
    const auto dims = p.mu_a.size();
    if (p.sigma_a.size() != dims || p.mu_b.size() != dims || p.sigma_b.size() != dims) {
      throw ShapeError("pinsker_tv_check: dimension mismatch within a pair");
    }
    double kl = 0.0;
    double tv = 0.0;
    for (Eigen::Index j = 0; j < dims; ++j) {
      kl += gaussian_kl_1d(p.mu_a[j], p.sigma_a[j], p.mu_b[j], p.sigma_b[j]);
      tv = std::max(tv, gaussian_tv_1d_numeric(p.mu_a[j], p.sigma_a[j], p.mu_b[j], p.sigma_b[j]));
    }
    const double gap = tv - std::sqrt(kl / 2.0);
    out.max_tv_minus_bound = out.tv.empty() ? gap : std::max(out.max_tv_minus_bound, gap);
    if (gap > tolerance) ++out.violations;
    out.tv.push_back(tv);
    out.kl.push_back(kl);
  }
  return out;
}

LossEpsilons estimate_loss_epsilons(const Dataset& d, const MlpParams& bc_net,
                                    const DynamicsEnsemble& ensemble, double behavior_entropy,
                                    double dynamics_entropy) {
  if (d.empty()) throw std::invalid_argument("estimate_loss_epsilons: empty dataset");
  if (ensemble.size() == 0) throw std::invalid_argument("estimate_loss_epsilons: empty ensemble");
  const Matrix s = d.states();
  const Matrix a = d.actions();
  const Matrix s_next = d.next_states();
  const Matrix bc_mean = tanh_act(mlp_forward(bc_net, s));
  const Vector bc_half_sq = 0.5 * (a - bc_mean).rowwise().squaredNorm();

  std::map<BitKey, MeanAcc> by_state;
  std::map<BitKey, std::size_t> sa_group;
  std::vector<std::size_t> sa_of_row(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    BitKey key;
    append_bits(key, d.transitions[i].s);
    auto& acc = by_state[key];
    acc.sum += bc_half_sq[static_cast<Eigen::Index>(i)];
    ++acc.n;
    append_bits(key, d.transitions[i].a);
    const auto [it, inserted] = sa_group.try_emplace(std::move(key), sa_group.size());
    sa_of_row[i] = it->second;
  }

  LossEpsilons out;
  out.state_groups = by_state.size();
  out.state_action_groups = sa_group.size();
  out.max_bc_half_sq = 0.0;
  for (const auto& [key, acc] : by_state) {
    out.max_bc_half_sq = std::max(out.max_bc_half_sq, acc.sum / static_cast<double>(acc.n));
  }

  out.max_model_half_sq = 0.0;
  for (std::size_t m = 0; m < ensemble.size(); ++m) {
    const Matrix pred = predict_next_batch(ensemble, m, s, a);
    const Vector err = 0.5 * (s_next - pred).rowwise().squaredNorm();
    std::vector<MeanAcc> groups(sa_group.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
      groups[sa_of_row[i]].sum += err[static_cast<Eigen::Index>(i)];
      ++groups[sa_of_row[i]].n;
    }
    for (const auto& g : groups) {
      out.max_model_half_sq = std::max(out.max_model_half_sq, g.sum / static_cast<double>(g.n));
    }
  }
  out.eps_beta = out.max_bc_half_sq - behavior_entropy;
  out.eps_phi = out.max_model_half_sq - dynamics_entropy;
  return out;
}

Prop1Bounds proposition1_bounds(double eps_beta, double eps_phi, double steps, double delta) {
  for (double v : {eps_beta, eps_phi, steps, delta}) {
    if (!std::isfinite(v)) throw std::invalid_argument("proposition bounds: arguments must be finite");
  }
  if (steps < 0.0) throw std::invalid_argument("proposition bounds: T must be >= 0");
  if (delta < 0.0) throw std::invalid_argument("proposition bounds: delta must be >= 0");
  const double quarter_log = 0.25 * std::log(2.0 * std::numbers::pi);
  const double rad_pi = 0.5 * eps_beta + quarter_log;
  const double rad_m = 0.5 * eps_phi + quarter_log;
  if (rad_pi < 0.0) {
    throw std::domain_error("policy bound radicand is negative (eps_beta = " + std::to_string(eps_beta) +
                            "); entropy input inconsistent with the losses");
  }
  if (rad_m < 0.0) {
    throw std::domain_error("model bound radicand is negative (eps_phi = " + std::to_string(eps_phi) +
                            "); entropy input inconsistent with the losses");
  }
  return {std::sqrt(rad_pi) + steps * std::sqrt(0.5 * delta), std::sqrt(rad_m)};
}

double return_gap_penalty(double eps_m, double eps_pi, double gamma, double r_max) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("return gap: gamma must be in (0, 1)");
  const double one_minus = 1.0 - gamma;
  return 2.0 * gamma * r_max * (eps_m + 2.0 * eps_pi) / (one_minus * one_minus) +
         4.0 * r_max * eps_pi / one_minus;
}

double return_gap_bound(double model_return, double eps_m, double eps_pi, double gamma, double r_max) {
  return model_return - return_gap_penalty(eps_m, eps_pi, gamma, r_max);
}

nlohmann::json to_json(const BoundReport& r) {
  return {
      {"eps_beta", r.epsilons.eps_beta},
      {"eps_phi", r.epsilons.eps_phi},
      {"sup_proxy", "empirical sup proxy: max over dataset samples"},
      {"max_bc_half_sq", r.epsilons.max_bc_half_sq},
      {"max_model_half_sq", r.epsilons.max_model_half_sq},
      {"state_groups", r.epsilons.state_groups},
      {"state_action_groups", r.epsilons.state_action_groups},
      {"behavior_entropy", r.behavior_entropy},
      {"dynamics_entropy", r.dynamics_entropy},
      {"entropy_assumed_zero", r.entropy_assumed_zero},
      {"eps_pi_bound", r.bounds.policy_shift},
      {"eps_m_bound", r.bounds.model_error},
      {"measured_tv_behavior_to_final", r.measured_tv_behavior_to_final},
      {"max_step_tv", r.max_step_tv},
      {"per_step_tv_limit", r.per_step_tv_limit},
      {"cumulative_step_tv", r.cumulative_step_tv},
      {"model_return", r.model_return},
      {"return_gap_penalty", r.return_gap_penalty},
      {"true_return_lower_bound", r.true_return_lower_bound},
      {"r_max", r.r_max},
      {"gamma", r.gamma},
      {"T", r.steps},
      {"delta", r.delta},
      {"pinsker_pairs", r.pinsker_pairs},
      {"pinsker_violations", r.pinsker_violations},
  };
}

}  // namespace bremen
