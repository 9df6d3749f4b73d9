#include "bremen/policy.hpp"


#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>

#include "bremen/binary_io.hpp"
#include "bremen/dataset.hpp"

namespace bremen {

namespace {

std::vector<std::size_t> layer_dims(std::size_t in, const std::vector<std::size_t>& hidden,
                                    std::size_t out) {
  std::vector<std::size_t> dims{in};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);
  return dims;
}

Matrix net_mean(const MlpParams& net, const Matrix& s) { return tanh_act(mlp_forward(net, s)); }

Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& idx, std::size_t begin,
                   std::size_t end) {
  Matrix out(static_cast<Eigen::Index>(end - begin), m.cols());
  for (std::size_t i = begin; i < end; ++i) {
    out.row(static_cast<Eigen::Index>(i - begin)) = m.row(static_cast<Eigen::Index>(idx[i]));
  }
  return out;
}

}  // namespace

double bc_loss(const MlpParams& net, const Matrix& s, const Matrix& a) {
  const Matrix m = tanh_act(mlp_forward(net, s));
  return 0.5 * (a - m).rowwise().squaredNorm().mean();
}

Vector bc_gradient(const MlpParams& net, const Matrix& s, const Matrix& a, double* loss) {
  MlpTape tape;
  const Matrix m = tanh_act(mlp_forward(net, s, tape));
  const Matrix diff = m - a;
  if (loss) *loss = 0.5 * diff.rowwise().squaredNorm().mean();
  const Matrix upstream =
      (diff.array() * (1.0 - m.array().square())) / static_cast<double>(s.rows());
  return mlp_backward(net, tape, upstream);
}

GaussianMlpPolicy GaussianMlpPolicy::random(std::size_t state_dim, std::size_t action_dim,
                                            const std::vector<std::size_t>& hidden, double sigma,
                                            std::uint64_t seed) {
  if (!(sigma > 0.0)) throw std::invalid_argument("policy sigma must be > 0");
  const auto dims = layer_dims(state_dim, hidden, action_dim);
  MlpParams net = MlpParams::xavier(dims, seed);
  // Small output layer: the initial mean action is close to zero.
  net.layers.back().weight *= 0.01;
  return {std::move(net), Vector::Constant(static_cast<Eigen::Index>(action_dim), sigma)};
}

Matrix GaussianMlpPolicy::mean_action(const Matrix& states) const {
  return tanh_act(mlp_forward(mean_net, states));
}

Vector GaussianMlpPolicy::mean_action(const Vector& state) const {
  Matrix s = state.transpose();
  return mean_action(s).row(0).transpose();
}

std::uint64_t GaussianMlpPolicy::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      std::uint64_t bits;
      std::memcpy(&bits, &v[i], sizeof bits);
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xff;
        h *= 0x100000001b3ULL;
      }
    }
  };
  mix(mean_net.flat());
  mix(sigma);
  return h;
}

Vector log_prob(const Matrix& mean, const Vector& sigma, const Matrix& raw_actions) {
  if (mean.rows() != raw_actions.rows() || mean.cols() != raw_actions.cols() ||
      mean.cols() != sigma.size()) {
    throw ShapeError("log_prob: mean, sigma and actions disagree in shape");
  }
  const double log_norm =
      sigma.array().log().sum() + 0.5 * static_cast<double>(sigma.size()) * std::log(2.0 * std::numbers::pi);
  const Eigen::RowVectorXd inv = sigma.cwiseInverse().transpose();
  const Matrix z = (raw_actions - mean).array().rowwise() * inv.array();
  return (-0.5 * z.rowwise().squaredNorm()).array() - log_norm;
}

ActionSample act(const GaussianMlpPolicy& policy, const Vector& state, Rng& rng) {
  if (!state.allFinite()) throw NumericError("act: non-finite state");
  const Vector mean = policy.mean_action(state);
  ActionSample out;
  out.raw = mean;
  for (Eigen::Index d = 0; d < mean.size(); ++d) out.raw[d] += policy.sigma[d] * rng.normal();
  out.action = out.raw.cwiseMax(-1.0).cwiseMin(1.0);
  Matrix m = mean.transpose();
  Matrix r = out.raw.transpose();
  out.log_prob = log_prob(m, policy.sigma, r)[0];
  return out;
}

BatchActions act_batch(const GaussianMlpPolicy& policy, const Matrix& states, Rng& rng) {
  BatchActions out;
  const Matrix mean = policy.mean_action(states);
  out.raw = mean;
  for (Eigen::Index i = 0; i < mean.rows(); ++i) {
    for (Eigen::Index d = 0; d < mean.cols(); ++d) out.raw(i, d) += policy.sigma[d] * rng.normal();
  }
  out.action = out.raw.cwiseMax(-1.0).cwiseMin(1.0);
  out.log_prob = log_prob(mean, policy.sigma, out.raw);
  return out;
}

std::pair<MlpParams, BcReport> behavior_clone(const Dataset& d, const BcConfig& cfg,
                                              std::uint64_t seed, const MlpParams* init) {
  if (d.empty()) throw std::invalid_argument("behavior_clone: empty dataset");
  MlpParams net = init ? *init
                       : MlpParams::xavier(layer_dims(d.state_dim, cfg.hidden, d.action_dim),
                                           derive_seed(seed, "bc_init"));
  if (net.in_dim() != d.state_dim || net.out_dim() != d.action_dim) {
    throw ShapeError("behavior_clone: warm-start net does not match dataset dims");
  }

  BcReport report;
  AdamState adam(net.param_count(), cfg.learning_rate);
  Vector flat = net.flat();

  if (cfg.full_batch) {
    const Matrix s = d.states();
    const Matrix a = d.actions();
    const double initial = bc_loss(net, s, a);
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
      double loss = 0.0;
      const Vector g = bc_gradient(net, s, a, &loss);
      report.loss_curve.push_back(loss);
      if (!std::isfinite(loss) || loss > 10.0 * initial + 1e-12) {
        throw NumericError("behavior_clone diverged at epoch " + std::to_string(epoch));
      }
      adam_step(adam, flat, g);
      net.set_flat(flat);
    }
    report.epochs = cfg.max_epochs;
    report.final_loss = bc_loss(net, s, a);
    report.val_action_mse = (a - net_mean(net, s)).array().square().mean();
    return {net, report};
  }

  const bool use_val = d.size() >= 3;
  Dataset train_set = d;
  Dataset val_set;
  if (use_val) {
    std::tie(train_set, val_set) =
        split_train_val(d, {cfg.split_train, cfg.split_val}, derive_seed(seed, "bc_split"));
  }
  const Matrix s = train_set.states();
  const Matrix a = train_set.actions();
  const Matrix vs = use_val ? val_set.states() : s;
  const Matrix va = use_val ? val_set.actions() : a;

  const double initial = bc_loss(net, s, a);
  auto val_mse = [&](const MlpParams& p) {
    const Matrix m = tanh_act(mlp_forward(p, vs));
    return (va - m).array().square().mean();
  };

  Rng rng(derive_seed(seed, "bc_shuffle"));
  std::vector<std::size_t> order(static_cast<std::size_t>(s.rows()));
  std::iota(order.begin(), order.end(), 0);
  double best_val = val_mse(net);
  MlpParams best = net;
  int stale = 0;
  int epoch = 0;
  for (; epoch < cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      const Matrix bs = gather_rows(s, order, b, e);
      const Matrix ba = gather_rows(a, order, b, e);
      const Vector g = bc_gradient(net, bs, ba, nullptr);
      adam_step(adam, flat, g);
      net.set_flat(flat);
    }
    const double loss = bc_loss(net, s, a);
    report.loss_curve.push_back(loss);
    if (!std::isfinite(loss) || loss > 10.0 * initial + 1e-12) {
      throw NumericError("behavior_clone diverged at epoch " + std::to_string(epoch));
    }
    const double v = val_mse(net);
    if (v < best_val) {
      best_val = v;
      best = net;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      ++epoch;
      break;
    }
  }
  report.epochs = epoch;
  report.final_loss = bc_loss(best, s, a);
  report.val_action_mse = best_val;
  return {best, report};
}

GaussianMlpPolicy init_target_policy(const MlpParams& bc_net, double sigma_init) {
  if (!(sigma_init > 0.0)) throw std::invalid_argument("sigma_init must be > 0");
  return {bc_net, Vector::Constant(static_cast<Eigen::Index>(bc_net.out_dim()), sigma_init)};
}

Vector per_state_kl(const GaussianMlpPolicy& pa, const GaussianMlpPolicy& pb, const Matrix& states) {
  if (pa.action_dim() != pb.action_dim()) throw ShapeError("mean_kl: action dims differ");
  const Matrix ma = pa.mean_action(states);
  const Matrix mb = pb.mean_action(states);
  const Eigen::ArrayXd va = pa.sigma.array().square();
  const Eigen::ArrayXd vb = pb.sigma.array().square();
  const double const_part = (pb.sigma.array() / pa.sigma.array()).log().sum() +
                            (va / (2.0 * vb)).sum() - 0.5 * static_cast<double>(va.size());
  const Eigen::RowVectorXd inv2 = (0.5 / vb).matrix().transpose();
  const Matrix sq = (ma - mb).array().square().rowwise() * inv2.array();
  return sq.rowwise().sum().array() + const_part;
}

double mean_kl(const GaussianMlpPolicy& pa, const GaussianMlpPolicy& pb, const Matrix& states) {
  if (states.rows() == 0) return 0.0;
  return per_state_kl(pa, pb, states).mean();
}

void save_policy(const std::string& path, const GaussianMlpPolicy& policy) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_mlp(out, policy.mean_net);
  io::put_magic(out, "SIGM");
  io::put<std::uint64_t>(out, static_cast<std::uint64_t>(policy.sigma.size()));
  io::put_doubles(out, policy.sigma.data(), static_cast<std::size_t>(policy.sigma.size()));
}

GaussianMlpPolicy load_policy(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  GaussianMlpPolicy p;
  p.mean_net = read_mlp(in);
  io::expect_magic(in, "SIGM");
  const auto n = io::get<std::uint64_t>(in, "sigma count");
  if (n != p.mean_net.out_dim()) throw FormatError("sigma block does not match action dim");
  p.sigma.resize(static_cast<Eigen::Index>(n));
  io::get_doubles(in, p.sigma.data(), n, "sigma values");
  if (!(p.sigma.array() > 0.0).all()) throw FormatError("sigma must be positive");
  return p;
}

}  // namespace bremen
