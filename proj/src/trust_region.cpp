#include "bremen/trust_region.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include "bremen/theory.hpp"

namespace bremen {

namespace {

constexpr double kValueRidge = 1e-5;

// Fisher operator at fixed parameters: the forward tape is shared across CG iterations.
class FisherOperator {
 public:
  FisherOperator(const GaussianMlpPolicy& policy, const Matrix& states, double damping)
      : policy_(policy), damping_(damping) {
    const Matrix z = mlp_forward(policy.mean_net, states, tape_);
    tanh_grad_ = 1.0 - tanh_act(z).array().square();
    weight_ = policy.sigma.array().square().inverse().matrix().transpose() /
              static_cast<double>(states.rows());
  }

  Vector operator()(const Vector& v) const {
    const Matrix jz = jacobian_vector_product(policy_.mean_net, tape_, v);
    Matrix u = jz.array() * tanh_grad_.array().square();
    u.array().rowwise() *= weight_.array();
    return mlp_backward(policy_.mean_net, tape_, u) + damping_ * v;
  }

 private:
  const GaussianMlpPolicy& policy_;
  double damping_;
  MlpTape tape_;
  Matrix tanh_grad_;
  Eigen::RowVectorXd weight_;
};

double surrogate_from_mean(const Matrix& mean, const Vector& sigma, const RolloutBatch& rollouts,
                           const Vector& advantages) {
  const Vector logp = log_prob(mean, sigma, rollouts.raw_actions);
  const Vector ratio = (logp - rollouts.log_probs).array().exp();
  return ratio.cwiseProduct(advantages).mean();
}

}  // namespace

Vector LinearValueFn::features(const Vector& s, int time) {
  const auto n = s.size();
  Vector f(2 * n + 4);
  const double t = 0.01 * time;
  f.head(n) = s;
  f.segment(n, n) = s.array().square();
  f[2 * n] = t;
  f[2 * n + 1] = t * t;
  f[2 * n + 2] = t * t * t;
  f[2 * n + 3] = 1.0;
  return f;
}

Matrix LinearValueFn::features(const Matrix& states, const std::vector<int>& times) {
  const auto n = states.cols();
  Matrix f(states.rows(), 2 * n + 4);
  for (Eigen::Index i = 0; i < states.rows(); ++i) {
    f.row(i) = features(Vector(states.row(i).transpose()), times[static_cast<std::size_t>(i)]).transpose();
  }
  return f;
}

double LinearValueFn::operator()(const Vector& state, int time) const {
  return weights.dot(features(state, time));
}

Vector discounted_returns(const RolloutBatch& rollouts, double gamma) {
  Vector ret(rollouts.rewards.size());
  for (const auto& tr : rollouts.trajectories) {
    double acc = 0.0;
    for (std::size_t t = tr.end; t-- > tr.begin;) {
      acc = rollouts.rewards[static_cast<Eigen::Index>(t)] + gamma * acc;
      ret[static_cast<Eigen::Index>(t)] = acc;
    }
  }
  return ret;
}

LinearValueFn fit_value_fn(const RolloutBatch& rollouts, double gamma) {
  if (rollouts.steps() == 0) throw std::invalid_argument("fit_value_fn: empty rollouts");
  const Matrix phi = LinearValueFn::features(rollouts.states, rollouts.time_index);
  const Vector y = discounted_returns(rollouts, gamma);
  Eigen::MatrixXd gram = phi.transpose() * phi;
  gram.diagonal().array() += kValueRidge;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw NumericError("fit_value_fn: normal equations are singular");
  }
  LinearValueFn vf{ldlt.solve(phi.transpose() * y)};
  if (!vf.weights.allFinite()) throw NumericError("fit_value_fn: non-finite weights");
  return vf;
}

Vector gae_recursion(const Vector& rewards, const Vector& values, double gamma, double lambda) {
  const auto n = rewards.size();
  if (values.size() != n + 1) throw ShapeError("gae: values must have one more entry than rewards");
  Vector adv(n);
  const double decay = gamma * lambda;
  double acc = 0.0;
  for (Eigen::Index t = n; t-- > 0;) {
    const double delta = rewards[t] + gamma * values[t + 1] - values[t];
    acc = delta + decay * acc;
    adv[t] = acc;
  }
  return adv;
}

AdvantageBatch compute_gae(const RolloutBatch& rollouts, const LinearValueFn& value_fn, double gamma,
                           double lambda) {
  const auto n = static_cast<Eigen::Index>(rollouts.steps());
  AdvantageBatch out;
  out.raw.resize(n);
  out.value_targets.resize(n);
  out.returns = discounted_returns(rollouts, gamma);
  for (const auto& tr : rollouts.trajectories) {
    const auto len = static_cast<Eigen::Index>(tr.end - tr.begin);
    Vector values(len + 1);
    for (Eigen::Index k = 0; k < len; ++k) {
      const auto row = static_cast<Eigen::Index>(tr.begin) + k;
      values[k] = value_fn(rollouts.states.row(row).transpose(),
                           rollouts.time_index[static_cast<std::size_t>(row)]);
    }
    values[len] = tr.terminated ? 0.0 : value_fn(tr.final_state, tr.final_time);
    const Vector rewards = rollouts.rewards.segment(static_cast<Eigen::Index>(tr.begin), len);
    const Vector adv = gae_recursion(rewards, values, gamma, lambda);
    out.raw.segment(static_cast<Eigen::Index>(tr.begin), len) = adv;
    out.value_targets.segment(static_cast<Eigen::Index>(tr.begin), len) = adv + values.head(len);
  }
  const double mean = n > 0 ? out.raw.mean() : 0.0;
  out.advantages = out.raw.array() - mean;
  const double sd = n > 0 ? std::sqrt(out.advantages.squaredNorm() / static_cast<double>(n)) : 0.0;
  if (sd > 0.0) out.advantages /= sd;
  return out;
}

double surrogate_value(const GaussianMlpPolicy& policy_old, const MlpParams& new_params,
                       const RolloutBatch& rollouts, const Vector& advantages) {
  return surrogate_from_mean(tanh_act(mlp_forward(new_params, rollouts.states)), policy_old.sigma, rollouts,
                             advantages);
}

SurrogateResult surrogate_and_grad(const GaussianMlpPolicy& policy_old, const MlpParams& new_params,
                                   const RolloutBatch& rollouts, const Vector& advantages) {
  const auto n = rollouts.states.rows();
  if (advantages.size() != n || rollouts.log_probs.size() != n) {
    throw ShapeError("surrogate: advantages / log-prob cache do not match rollout length");
  }
  MlpTape tape;
  const Matrix mean = tanh_act(mlp_forward(new_params, rollouts.states, tape));
  const Vector logp = log_prob(mean, policy_old.sigma, rollouts.raw_actions);
  const Vector ratio = (logp - rollouts.log_probs).array().exp();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(ratio[i])) {
      std::ostringstream os;
      os << "surrogate: non-finite likelihood ratio at sample " << i << " (log p new " << logp[i]
         << ", log p old " << rollouts.log_probs[i] << ")";
      throw NumericError(os.str());
    }
  }
  SurrogateResult out;
  out.value = ratio.cwiseProduct(advantages).mean();

  // d/dz of ratio * A / n through log N(raw; tanh(z), sigma^2).
  const Vector coef = ratio.cwiseProduct(advantages) / static_cast<double>(n);
  const Eigen::RowVectorXd inv_var = policy_old.sigma.array().square().inverse().matrix().transpose();
  Matrix upstream = (rollouts.raw_actions - mean).array().rowwise() * inv_var.array();
  upstream.array() *= 1.0 - mean.array().square();
  upstream.array().colwise() *= coef.array();
  out.gradient = mlp_backward(new_params, tape, upstream);
  return out;
}

Vector fisher_vector_product(const GaussianMlpPolicy& policy, const Matrix& states, const Vector& v,
                             double damping) {
  if (static_cast<std::size_t>(v.size()) != policy.mean_net.param_count()) {
    throw ShapeError("fisher_vector_product: tangent length mismatch");
  }
  return FisherOperator(policy, states, damping)(v);
}

CgResult conjugate_gradient(const std::function<Vector(const Vector&)>& apply, const Vector& b,
                            int iterations, double residual_tol) {
  CgResult out;
  out.x = Vector::Zero(b.size());
  Vector r = b;
  Vector p = b;
  double rr = r.squaredNorm();
  for (int i = 0; i < iterations && rr > residual_tol * residual_tol; ++i) {
    const Vector ap = apply(p);
    const double pap = p.dot(ap);
    if (!(pap > 0.0)) break;
    const double alpha = rr / pap;
    out.x += alpha * p;
    r -= alpha * ap;
    const double rr_new = r.squaredNorm();
    p = r + (rr_new / rr) * p;
    rr = rr_new;
    out.iterations = i + 1;
  }
  out.residual_norm = std::sqrt(rr);
  return out;
}

std::pair<GaussianMlpPolicy, TrpoStepReport> trpo_step(const GaussianMlpPolicy& policy,
                                                       const RolloutBatch& rollouts,
                                                       const Vector& advantages,
                                                       const TrpoConfig& cfg) {
  if (!(cfg.max_kl > 0.0)) throw std::invalid_argument("trpo_step: delta must be > 0");
  TrpoStepReport report;
  const SurrogateResult base = surrogate_and_grad(policy, policy.mean_net, rollouts, advantages);
  report.surrogate_before = base.value;
  if (!base.gradient.allFinite() || base.gradient.squaredNorm() == 0.0) return {policy, report};

  const FisherOperator fisher(policy, rollouts.states, cfg.cg_damping);
  const CgResult cg = conjugate_gradient(fisher, base.gradient, cfg.cg_iterations);
  report.cg_residual = cg.residual_norm;
  const double shs = cg.x.dot(fisher(cg.x));
  if (!(shs > 0.0) || !std::isfinite(shs)) return {policy, report};
  const Vector full_step = std::sqrt(2.0 * cfg.max_kl / shs) * cg.x;

  const Matrix old_mean = policy.mean_action(rollouts.states);
  const double tv_limit = std::sqrt(cfg.max_kl / 2.0);
  const Eigen::RowVectorXd inv_sigma = policy.sigma.cwiseInverse().transpose();

  const auto max_state_dist = [&](double f) {
    GaussianMlpPolicy cand = policy;
    cand.mean_net.add_scaled(full_step, f);
    const Matrix z = (cand.mean_action(rollouts.states) - old_mean).array().rowwise() * inv_sigma.array();
    return std::sqrt(z.rowwise().squaredNorm().maxCoeff());
  };
  double frac = 1.0;
  if (cfg.enforce_state_tv) {
    // Start the search where the largest per-state shift sits just inside the TV limit.
    const double dist_limit = 2.0 * boost::math::quantile(boost::math::normal(), 0.5 * (1.0 + tv_limit));
    const double dist = max_state_dist(1.0);
    if (std::isfinite(dist) && dist > dist_limit) frac = 0.98 * dist_limit / dist;
  }
  for (int j = 0; j < cfg.max_backtracks; ++j, frac *= cfg.backtrack_factor) {
    GaussianMlpPolicy cand = policy;
    cand.mean_net.add_scaled(full_step, frac);
    const Matrix new_mean = cand.mean_action(rollouts.states);
    const Matrix z = (new_mean - old_mean).array().rowwise() * inv_sigma.array();
    const Vector dist2 = z.rowwise().squaredNorm();
    const double kl = 0.5 * dist2.mean();
    const double max_tv = 2.0 * normal_cdf(0.5 * std::sqrt(dist2.maxCoeff())) - 1.0;
    const double improvement = surrogate_from_mean(new_mean, policy.sigma, rollouts, advantages) - base.value;
    report.backtracks = j;
    if (!std::isfinite(improvement) || !std::isfinite(kl)) continue;
    if (improvement > 0.0 && kl <= cfg.kl_slack * cfg.max_kl &&
        (!cfg.enforce_state_tv || max_tv <= tv_limit)) {
      report.surrogate_improvement = improvement;
      report.mean_kl = kl;
      report.max_state_tv = max_tv;
      report.accepted = true;
      return {std::move(cand), report};
    }
  }
  report.backtracks = cfg.max_backtracks;
  return {policy, report};
}

Vector explicit_kl_advantage(const Vector& advantages, const GaussianMlpPolicy& policy,
                             const GaussianMlpPolicy& bc_policy, const Matrix& states, double alpha) {
  if (alpha < 0.0) throw std::invalid_argument("explicit KL coefficient must be >= 0");
  if (advantages.size() != states.rows()) throw ShapeError("explicit_kl_advantage: length mismatch");
  if (alpha == 0.0) return advantages;
  return advantages - alpha * per_state_kl(policy, bc_policy, states);
}

}  // namespace bremen
