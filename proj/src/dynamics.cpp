#include "bremen/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <limits>
#include <numeric>

#include "bremen/binary_io.hpp"
#include "bremen/rng.hpp"

namespace bremen {

namespace {

constexpr std::uint32_t kEnsembleVersion = 1;
constexpr double kStdFloor = 1e-6;

Vector column_std(const Matrix& m, const Vector& mean) {
  const Eigen::RowVectorXd mu = mean.transpose();
  Vector var = (m.rowwise() - mu).array().square().colwise().mean().transpose();
  return var.cwiseSqrt().cwiseMax(kStdFloor);
}

Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& idx, std::size_t begin,
                   std::size_t end) {
  Matrix out(static_cast<Eigen::Index>(end - begin), m.cols());
  for (std::size_t i = begin; i < end; ++i) {
    out.row(static_cast<Eigen::Index>(i - begin)) = m.row(static_cast<Eigen::Index>(idx[i]));
  }
  return out;
}

std::vector<std::size_t> layer_dims(std::size_t in, const std::vector<std::size_t>& hidden,
                                    std::size_t out) {
  std::vector<std::size_t> dims{in};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);
  return dims;
}

struct MemberData {
  Matrix inputs;   // normalized (s, a)
  Matrix targets;  // scaled deltas
  Matrix states;
  Matrix next_states;
};

MemberData prepare(const Dataset& d, const Normalizer& norm) {
  MemberData md;
  md.states = d.states();
  md.next_states = d.next_states();
  md.inputs = norm.inputs(md.states, d.actions());
  const Eigen::RowVectorXd inv = norm.delta_std.cwiseInverse().transpose();
  md.targets = (md.next_states - md.states).array().rowwise() * inv.array();
  return md;
}

double raw_mse(const MlpParams& net, const Normalizer& norm, const MemberData& md) {
  const Matrix pred = mlp_forward(net, md.inputs);
  const Eigen::RowVectorXd scale = norm.delta_std.transpose();
  const Matrix delta = pred.array().rowwise() * scale.array();
  return ((md.states + delta) - md.next_states).array().square().mean();
}

MemberReport train_member(MlpParams& net, const Normalizer& norm, const MemberData& train,
                          const MemberData& val, const DynamicsConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  AdamState adam(net.param_count(), cfg.learning_rate);
  Vector flat = net.flat();
  std::vector<std::size_t> order(static_cast<std::size_t>(train.inputs.rows()));
  std::iota(order.begin(), order.end(), 0);

  MlpParams best = net;
  double best_val = raw_mse(net, norm, val);
  int stale = 0;
  int epoch = 0;
  for (; epoch < cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      const Matrix x = gather_rows(train.inputs, order, b, e);
      const Matrix y = gather_rows(train.targets, order, b, e);
      double loss = 0.0;
      const Vector g = dynamics_gradient(net, x, y, &loss);
      if (!std::isfinite(loss)) {
        throw NumericError("dynamics training produced a non-finite loss at epoch " +
                           std::to_string(epoch));
      }
      adam_step(adam, flat, g);
      net.set_flat(flat);
    }
    const double v = raw_mse(net, norm, val);
    if (!std::isfinite(v)) throw NumericError("dynamics validation loss is non-finite");
    if (v < best_val) {
      best_val = v;
      best = net;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      ++epoch;
      break;
    }
  }
  net = best;
  return {raw_mse(net, norm, train), best_val, epoch};
}

}  // namespace

double dynamics_loss(const MlpParams& net, const Matrix& inputs, const Matrix& targets) {
  return 0.5 * (mlp_forward(net, inputs) - targets).rowwise().squaredNorm().mean();
}

Vector dynamics_gradient(const MlpParams& net, const Matrix& inputs, const Matrix& targets,
                         double* loss) {
  MlpTape tape;
  const Matrix diff = mlp_forward(net, inputs, tape) - targets;
  if (loss) *loss = 0.5 * diff.rowwise().squaredNorm().mean();
  return mlp_backward(net, tape, diff / static_cast<double>(inputs.rows()));
}

Normalizer Normalizer::fit(const Dataset& d) {
  if (d.empty()) throw std::invalid_argument("normalizer: empty dataset");
  const Matrix s = d.states();
  const Matrix a = d.actions();
  const Matrix delta = d.next_states() - s;
  Normalizer n;
  n.state_mean = s.colwise().mean().transpose();
  n.state_std = column_std(s, n.state_mean);
  n.action_mean = a.colwise().mean().transpose();
  n.action_std = column_std(a, n.action_mean);
  n.delta_std = delta.array().square().colwise().mean().sqrt().transpose().matrix().cwiseMax(kStdFloor);
  return n;
}

Matrix Normalizer::inputs(const Matrix& states, const Matrix& actions) const {
  if (states.rows() != actions.rows()) throw ShapeError("normalizer: row count mismatch");
  if (states.cols() != state_mean.size() || actions.cols() != action_mean.size()) {
    throw ShapeError("normalizer: column count mismatch");
  }
  Matrix x(states.rows(), states.cols() + actions.cols());
  const Eigen::RowVectorXd sm = state_mean.transpose();
  const Eigen::RowVectorXd ss = state_std.cwiseInverse().transpose();
  const Eigen::RowVectorXd am = action_mean.transpose();
  const Eigen::RowVectorXd as = action_std.cwiseInverse().transpose();
  x.leftCols(states.cols()) = (states.rowwise() - sm).array().rowwise() * ss.array();
  x.rightCols(actions.cols()) = (actions.rowwise() - am).array().rowwise() * as.array();
  return x;
}

std::pair<DynamicsEnsemble, EnsembleReport> train_ensemble(const Dataset& d_all,
                                                           const DynamicsConfig& cfg,
                                                           std::uint64_t seed,
                                                           const DynamicsEnsemble* warm_start) {
  if (cfg.ensemble_size < 1) throw std::invalid_argument("ensemble_size must be >= 1");
  if (d_all.size() < 10 * cfg.ensemble_size) {
    throw std::invalid_argument("train_ensemble: need at least 10 * K transitions, got " +
                                std::to_string(d_all.size()));
  }
  DynamicsEnsemble ens;
  ens.state_dim = d_all.state_dim;
  ens.action_dim = d_all.action_dim;
  ens.normalizer = Normalizer::fit(d_all);

  const auto dims = layer_dims(d_all.state_dim + d_all.action_dim, cfg.hidden, d_all.state_dim);
  for (std::size_t k = 0; k < cfg.ensemble_size; ++k) {
    if (warm_start && k < warm_start->size() && warm_start->members[k].dims() == dims) {
      ens.members.push_back(warm_start->members[k]);
    } else {
      ens.members.push_back(MlpParams::xavier(dims, derive_seed(seed, "member_init", k)));
    }
  }

  const auto [train_set, val_set] =
      split_train_val(d_all, {cfg.split_train, cfg.split_val}, derive_seed(seed, "dynamics_split"));
  const MemberData train = prepare(train_set, ens.normalizer);
  const MemberData val = prepare(val_set, ens.normalizer);

  EnsembleReport report;
  report.members.resize(cfg.ensemble_size);
  auto work = [&](std::size_t k) {
    report.members[k] = train_member(ens.members[k], ens.normalizer, train, val, cfg,
                                     derive_seed(seed, "member_shuffle", k));
  };
  const auto threads = static_cast<std::size_t>(std::max(1, cfg.threads));
  if (threads == 1) {
    for (std::size_t k = 0; k < cfg.ensemble_size; ++k) work(k);
  } else {
    for (std::size_t base = 0; base < cfg.ensemble_size; base += threads) {
      std::vector<std::future<void>> jobs;
      for (std::size_t k = base; k < std::min(cfg.ensemble_size, base + threads); ++k) {
        jobs.push_back(std::async(std::launch::async, work, k));
      }
      for (auto& j : jobs) j.get();
    }
  }
  return {std::move(ens), std::move(report)};
}

Matrix predict_next_batch(const DynamicsEnsemble& ens, std::size_t member, const Matrix& states,
                          const Matrix& actions) {
  if (member >= ens.size()) {
    throw std::out_of_range("ensemble member " + std::to_string(member) + " out of range (K=" +
                            std::to_string(ens.size()) + ")");
  }
  const Matrix pred = mlp_forward(ens.members[member], ens.normalizer.inputs(states, actions));
  const Eigen::RowVectorXd scale = ens.normalizer.delta_std.transpose();
  return states + Matrix(pred.array().rowwise() * scale.array());
}

Vector predict_next(const DynamicsEnsemble& ens, std::size_t member, const Vector& s, const Vector& a) {
  const Matrix sm = s.transpose();
  const Matrix am = a.transpose();
  return predict_next_batch(ens, member, sm, am).row(0).transpose();
}

double one_step_mse(const DynamicsEnsemble& ens, std::size_t member, const Dataset& d) {
  const Matrix pred = predict_next_batch(ens, member, d.states(), d.actions());
  return (pred - d.next_states()).array().square().mean();
}

RolloutBatch imaginary_rollout(const DynamicsEnsemble& ens, const Env& env,
                               const GaussianMlpPolicy& policy, const Matrix& start_pool,
                               const RolloutConfig& cfg, std::uint64_t seed,
                               const TransitionOverride& override_dynamics) {
  if (cfg.length < 1) throw std::invalid_argument("rollout length must be >= 1");
  if (start_pool.rows() == 0) throw std::invalid_argument("rollout start pool is empty");
  const std::size_t k_members = override_dynamics ? std::max<std::size_t>(ens.size(), 1) : ens.size();
  if (k_members == 0) throw std::invalid_argument("rollout needs at least one model");
  const auto sdim = start_pool.cols();
  const auto adim = static_cast<Eigen::Index>(policy.action_dim());

  struct Step {
    Vector s, a, raw;
    double r, logp;
    int t;
    std::uint32_t model;
  };
  struct Branch {
    std::vector<Step> steps;
    bool terminated = false;
    Vector final_state;
    int final_time = 0;
  };

  Rng rng(seed);
  std::vector<Branch> branches;
  std::size_t total = 0;
  std::size_t incidents = 0;

  auto advance = [&](std::size_t member, const Matrix& s, const Matrix& a) {
    return override_dynamics ? override_dynamics(member, s, a) : predict_next_batch(ens, member, s, a);
  };

  while (total < cfg.min_steps || branches.empty()) {
    const std::size_t remaining = cfg.min_steps > total ? cfg.min_steps - total : 1;
    const std::size_t wave = (remaining + static_cast<std::size_t>(cfg.length) - 1) /
                             static_cast<std::size_t>(cfg.length);
    const std::size_t first = branches.size();
    branches.resize(first + wave);

    std::vector<std::size_t> active(wave);
    Matrix cur(static_cast<Eigen::Index>(wave), sdim);
    for (std::size_t i = 0; i < wave; ++i) {
      active[i] = first + i;
      cur.row(static_cast<Eigen::Index>(i)) =
          start_pool.row(static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(start_pool.rows()))));
    }

    for (int t = 0; t < cfg.length && !active.empty(); ++t) {
      const auto m = static_cast<Eigen::Index>(active.size());
      const BatchActions acts = act_batch(policy, cur, rng);
      std::vector<std::uint32_t> pick(active.size());
      for (auto& p : pick) p = static_cast<std::uint32_t>(rng.index(k_members));

      Matrix next(m, sdim);
      for (std::size_t member = 0; member < k_members; ++member) {
        std::vector<Eigen::Index> rows;
        for (Eigen::Index i = 0; i < m; ++i) {
          if (pick[static_cast<std::size_t>(i)] == member) rows.push_back(i);
        }
        if (rows.empty()) continue;
        Matrix s(static_cast<Eigen::Index>(rows.size()), sdim);
        Matrix a(static_cast<Eigen::Index>(rows.size()), adim);
        for (std::size_t j = 0; j < rows.size(); ++j) {
          s.row(static_cast<Eigen::Index>(j)) = cur.row(rows[j]);
          a.row(static_cast<Eigen::Index>(j)) = acts.action.row(rows[j]);
        }
        const Matrix n = advance(member, s, a);
        for (std::size_t j = 0; j < rows.size(); ++j) next.row(rows[j]) = n.row(static_cast<Eigen::Index>(j));
      }

      std::vector<std::size_t> still;
      std::vector<Eigen::Index> keep_rows;
      for (Eigen::Index i = 0; i < m; ++i) {
        Branch& br = branches[active[static_cast<std::size_t>(i)]];
        const Vector s = cur.row(i).transpose();
        const Vector sn = next.row(i).transpose();
        if (!sn.allFinite()) {
          ++incidents;
          br.terminated = false;
          br.final_state = s;
          br.final_time = t;
          continue;
        }
        const Vector a = acts.action.row(i).transpose();
        br.steps.push_back({s, a, acts.raw.row(i).transpose(), env.reward(s, a),
                            acts.log_prob[i], t, pick[static_cast<std::size_t>(i)]});
        ++total;
        const bool term = env.terminal(sn);
        if (term || t + 1 == cfg.length) {
          br.terminated = term;
          br.final_state = sn;
          br.final_time = t + 1;
        } else {
          still.push_back(active[static_cast<std::size_t>(i)]);
          keep_rows.push_back(i);
        }
      }
      Matrix kept(static_cast<Eigen::Index>(keep_rows.size()), sdim);
      for (std::size_t j = 0; j < keep_rows.size(); ++j) {
        kept.row(static_cast<Eigen::Index>(j)) = next.row(keep_rows[j]);
      }
      cur = std::move(kept);
      active = std::move(still);
    }
  }

  RolloutBatch out;
  const auto n = static_cast<Eigen::Index>(total);
  out.states.resize(n, sdim);
  out.actions.resize(n, adim);
  out.raw_actions.resize(n, adim);
  out.rewards.resize(n);
  out.log_probs.resize(n);
  out.time_index.reserve(total);
  out.model_index.reserve(total);
  out.nonfinite_incidents = incidents;
  Eigen::Index row = 0;
  for (auto& br : branches) {
    if (br.steps.empty()) continue;
    Trajectory tr;
    tr.begin = static_cast<std::size_t>(row);
    for (const auto& st : br.steps) {
      out.states.row(row) = st.s.transpose();
      out.actions.row(row) = st.a.transpose();
      out.raw_actions.row(row) = st.raw.transpose();
      out.rewards[row] = st.r;
      out.log_probs[row] = st.logp;
      out.time_index.push_back(st.t);
      out.model_index.push_back(st.model);
      ++row;
    }
    tr.end = static_cast<std::size_t>(row);
    tr.terminated = br.terminated;
    tr.final_state = br.final_state;
    tr.final_time = br.final_time;
    out.trajectories.push_back(std::move(tr));
  }
  return out;
}

void save_ensemble(const std::string& path, const DynamicsEnsemble& ens) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  io::put_magic(out, "BREN");
  io::put<std::uint32_t>(out, kEnsembleVersion);
  io::put<std::uint32_t>(out, static_cast<std::uint32_t>(ens.size()));
  for (const auto& m : ens.members) write_mlp(out, m);
  io::put_magic(out, "NORM");
  io::put<std::uint64_t>(out, ens.state_dim);
  io::put<std::uint64_t>(out, ens.action_dim);
  const auto& n = ens.normalizer;
  for (const Vector* v : {&n.state_mean, &n.state_std, &n.action_mean, &n.action_std, &n.delta_std}) {
    io::put_doubles(out, v->data(), static_cast<std::size_t>(v->size()));
  }
}

DynamicsEnsemble load_ensemble(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  io::expect_magic(in, "BREN");
  const auto version = io::get<std::uint32_t>(in, "ensemble version");
  if (version != kEnsembleVersion) throw FormatError("unsupported ensemble version");
  const auto k = io::get<std::uint32_t>(in, "ensemble size");
  if (k == 0 || k > 1024) throw FormatError("implausible ensemble size");
  DynamicsEnsemble ens;
  for (std::uint32_t i = 0; i < k; ++i) ens.members.push_back(read_mlp(in));
  io::expect_magic(in, "NORM");
  ens.state_dim = io::get<std::uint64_t>(in, "state dim");
  ens.action_dim = io::get<std::uint64_t>(in, "action dim");
  auto read_vec = [&](std::size_t len, const char* what) {
    Vector v(static_cast<Eigen::Index>(len));
    io::get_doubles(in, v.data(), len, what);
    return v;
  };
  auto& n = ens.normalizer;
  n.state_mean = read_vec(ens.state_dim, "state mean");
  n.state_std = read_vec(ens.state_dim, "state std");
  n.action_mean = read_vec(ens.action_dim, "action mean");
  n.action_std = read_vec(ens.action_dim, "action std");
  n.delta_std = read_vec(ens.state_dim, "delta std");
  for (const auto& m : ens.members) {
    if (m.in_dim() != ens.state_dim + ens.action_dim || m.out_dim() != ens.state_dim) {
      throw FormatError("ensemble member dims disagree with the normalizer block");
    }
  }
  return ens;
}

}  // namespace bremen
