#include "bremen/orchestrator.hpp"

#include <chrono>
#include <cmath>
#include <set>
#include <stdexcept>

#include "bremen/rng.hpp"
#include "bremen/theory.hpp"

namespace bremen {

namespace {

class Clock {
 public:
  explicit Clock(bool enabled) : enabled_(enabled), start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    if (!enabled_) return 0.0;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  bool enabled_;
  std::chrono::steady_clock::time_point start_;
};

std::string run_id(const ExperimentConfig& cfg) {
  return cfg.env + "-" + to_string(cfg.mode) + "-s" + std::to_string(cfg.seed);
}

template <class Chooser>
EvalStats run_eval(Env& env, int episodes, std::uint64_t seed, Chooser&& choose) {
  if (episodes < 1) throw std::invalid_argument("evaluation needs at least one episode");
  const auto before = env.step_count();
  std::vector<double> returns;
  for (int e = 0; e < episodes; ++e) {
    EnvState st = env.reset(seed + static_cast<std::uint64_t>(e));
    double total = 0.0;
    bool done = false;
    while (!done) {
      StepResult r = env.step(st, choose(st.state));
      total += r.reward;
      done = r.done;
      st = std::move(r.next);
    }
    returns.push_back(total);
  }
  EvalStats out;
  for (double r : returns) out.mean += r;
  out.mean /= static_cast<double>(returns.size());
  double var = 0.0;
  for (double r : returns) var += (r - out.mean) * (r - out.mean);
  out.std = std::sqrt(var / static_cast<double>(returns.size()));
  out.env_steps = env.step_count() - before;
  return out;
}

double mean_trajectory_return(const RolloutBatch& rb) {
  if (rb.trajectories.empty()) return 0.0;
  double total = 0.0;
  for (const auto& tr : rb.trajectories) {
    for (std::size_t t = tr.begin; t < tr.end; ++t) total += rb.rewards[static_cast<Eigen::Index>(t)];
  }
  return total / static_cast<double>(rb.trajectories.size());
}

std::uint64_t eval_seed(const ExperimentConfig& cfg) { return derive_seed(cfg.seed, "eval"); }

void emit_eval_row(MetricsWriter* metrics, const ExperimentConfig& cfg, const Clock& clock, int deployment,
                   int iteration, const EvalStats& ev, std::size_t samples) {
  if (!metrics) return;
  MetricsRow row{run_id(cfg), deployment, iteration, clock.seconds(), {}};
  row.scalars["return"] = ev.mean;
  row.scalars["return_std"] = ev.std;
  row.scalars["samples"] = static_cast<double>(samples);
  metrics->write(row);
}

}  // namespace

EvalStats evaluate_policy(Env& env, const GaussianMlpPolicy& policy, int episodes, std::uint64_t seed) {
  return run_eval(env, episodes, seed, [&](const Vector& s) { return policy.mean_action(s); });
}

EvalStats evaluate_controller(Env& env, const DMat& gain, int episodes, std::uint64_t seed) {
  return run_eval(env, episodes, seed, [&](const Vector& s) { return Vector(-(gain * s)); });
}

GaussianMlpPolicy initial_policy(const ExperimentConfig& cfg) {
  const EnvSpec spec = make_env_spec(cfg.env, cfg.horizon);
  return GaussianMlpPolicy::random(spec.state_dim, spec.action_dim, cfg.policy_hidden, cfg.sigma,
                                   derive_seed(cfg.seed, "policy_init"));
}

std::uint64_t collection_seed(const ExperimentConfig& cfg, int deployment_index) {
  return derive_seed(cfg.seed, "collect", static_cast<std::uint64_t>(deployment_index));
}

DeploymentRecord improve_policy(const Dataset& d_all, const Dataset& latest, LearnerState& state,
                                const ExperimentConfig& cfg, const Env& env, int deployment_index,
                                const GaussianMlpPolicy* deployed, MetricsWriter* metrics) {
  const auto dep = static_cast<std::uint64_t>(deployment_index);
  const Clock clock(cfg.record_wall_clock);
  DeploymentRecord rec;
  rec.index = deployment_index;
  try {
    const DynamicsEnsemble* warm =
        cfg.dynamics_warm_start && state.ensemble ? &*state.ensemble : nullptr;
    auto [ens, ens_report] = train_ensemble(d_all, cfg.dynamics_config(), derive_seed(cfg.seed, "dynamics", dep), warm);
    state.ensemble = std::move(ens);
    rec.dynamics = std::move(ens_report);

    const Dataset& bc_data = cfg.bc_on_all_data ? d_all : latest;
    std::optional<GaussianMlpPolicy> bc_policy;
    if (cfg.mode != Mode::MetrpoOffline) {
      auto [bc_net, bc_report] = behavior_clone(bc_data, cfg.bc_config(), derive_seed(cfg.seed, "bc", dep));
      state.bc_net = bc_net;
      rec.bc = std::move(bc_report);
      bc_policy = init_target_policy(bc_net, cfg.sigma);
    }
    if (cfg.mode == Mode::Bremen) {
      state.policy = *bc_policy;
    } else {
      const EnvSpec& spec = env.spec();
      state.policy = GaussianMlpPolicy::random(spec.state_dim, spec.action_dim, cfg.policy_hidden, cfg.sigma,
                                               derive_seed(cfg.seed, "reinit", dep));
    }

    const Matrix pool = d_all.states();
    const Matrix latest_states = latest.states();
    const GaussianMlpPolicy start = state.policy;
    if (deployed) rec.initial_kl_to_deployed = mean_kl(state.policy, *deployed, latest_states);

    if (metrics) {
      MetricsRow row{run_id(cfg), deployment_index, 0, clock.seconds(), {}};
      double val = 0.0;
      for (const auto& m : rec.dynamics.members) val += m.val_mse;
      row.scalars["dynamics_val_mse"] = val / static_cast<double>(rec.dynamics.members.size());
      if (rec.bc) row.scalars["bc_loss"] = rec.bc->final_loss;
      row.scalars["kl_to_deployed"] = rec.initial_kl_to_deployed;
      metrics->write(row);
    }

    const TrpoConfig trpo_cfg = cfg.trpo_config();
    const RolloutConfig rollout_cfg = cfg.rollout_config();
    for (int t = 0; t < cfg.iterations; ++t) {
      const std::uint64_t it_seed =
          derive_seed(cfg.seed, "rollout", dep * 1000003ULL + static_cast<std::uint64_t>(t));
      const RolloutBatch rb = imaginary_rollout(*state.ensemble, env, state.policy, pool, rollout_cfg, it_seed);
      const LinearValueFn vf = fit_value_fn(rb, cfg.gamma);
      AdvantageBatch adv = compute_gae(rb, vf, cfg.gamma, cfg.lambda);
      if (cfg.mode == Mode::ExplicitKl) {
        adv.advantages = explicit_kl_advantage(adv.advantages, state.policy, *bc_policy, rb.states, cfg.kl_alpha);
      }
      auto [next, step] = trpo_step(state.policy, rb, adv.advantages, trpo_cfg);
      state.policy = std::move(next);

      IterationRecord ir;
      ir.step = step;
      ir.model_return = mean_trajectory_return(rb);
      ir.rollout_steps = rb.steps();
      ir.nonfinite_incidents = rb.nonfinite_incidents;
      if (deployed) ir.kl_to_deployed = mean_kl(state.policy, *deployed, latest_states);
      rec.iterations.push_back(ir);

      if (metrics) {
        MetricsRow row{run_id(cfg), deployment_index, t + 1, clock.seconds(), {}};
        row.scalars["accepted"] = step.accepted ? 1.0 : 0.0;
        row.scalars["mean_kl"] = step.mean_kl;
        row.scalars["max_state_tv"] = step.max_state_tv;
        row.scalars["surrogate_improvement"] = step.surrogate_improvement;
        row.scalars["backtracks"] = step.backtracks;
        row.scalars["model_return"] = ir.model_return;
        row.scalars["kl_to_deployed"] = ir.kl_to_deployed;
        metrics->write(row);
      }
    }
    rec.final_kl_to_deployed = rec.iterations.empty() ? rec.initial_kl_to_deployed
                                                      : rec.iterations.back().kl_to_deployed;
    rec.drift_tv = latest_states.rows() > 0 ? policy_tv(start, state.policy, latest_states).maxCoeff() : 0.0;
  } catch (const std::exception& e) {
    throw std::runtime_error("deployment " + std::to_string(deployment_index) + ": " + e.what());
  }
  return rec;
}

DeploymentReport run_deployment_loop(const ExperimentConfig& cfg, MetricsWriter* metrics) {
  cfg.validate();
  const Clock clock(cfg.record_wall_clock);
  Env env(make_env_spec(cfg.env, cfg.horizon));
  DeploymentReport report;
  report.cfg = cfg;

  LearnerState state{initial_policy(cfg), std::nullopt, std::nullopt};
  report.initial_eval = evaluate_policy(env, state.policy, cfg.eval_episodes, eval_seed(cfg));
  report.eval_env_steps += report.initial_eval.env_steps;
  emit_eval_row(metrics, cfg, clock, 0, 0, report.initial_eval, 0);

  Dataset d_all = make_empty_dataset(env.spec());
  Dataset latest = make_empty_dataset(env.spec());
  for (int i = 1; i <= cfg.deployments; ++i) {
    const GaussianMlpPolicy deployed = state.policy;
    report.collection_hashes.push_back(deployed.hash());
    const auto before = env.step_count();
    const Dataset batch = collect_transitions(env, deployed, cfg.samples_per_deployment,
                                              collection_seed(cfg, i), static_cast<std::uint32_t>(i));
    report.collection_env_steps += env.step_count() - before;
    append_batch(d_all, latest, batch);

    const auto opt_before = env.step_count();
    DeploymentRecord rec = improve_policy(d_all, latest, state, cfg, env, i, &deployed, metrics);
    rec.optimization_env_steps = env.step_count() - opt_before;
    report.optimization_env_steps += rec.optimization_env_steps;
    rec.samples_collected = batch.size();
    rec.cumulative_samples = d_all.size();
    rec.collection_policy_hash = deployed.hash();

    rec.eval = evaluate_policy(env, state.policy, cfg.eval_episodes, eval_seed(cfg));
    report.eval_env_steps += rec.eval.env_steps;
    emit_eval_row(metrics, cfg, clock, i, cfg.iterations + 1, rec.eval, d_all.size());
    if (metrics) metrics->flush();
    report.deployments.push_back(std::move(rec));
  }
  report.final_policy = state.policy;
  report.total_env_steps = env.step_count();
  return report;
}

DeploymentReport run_offline(const Dataset& dataset, const ExperimentConfig& cfg, MetricsWriter* metrics,
                             LearnerState* state, int deployment_index, const Dataset* latest,
                             const GaussianMlpPolicy* deployed) {
  cfg.validate();
  if (dataset.empty()) throw std::invalid_argument("run_offline: dataset is empty");
  const Clock clock(cfg.record_wall_clock);
  Env env(make_env_spec(cfg.env, cfg.horizon));
  if (dataset.env_id != env.spec().name()) {
    throw std::invalid_argument("run_offline: dataset is for env '" + dataset.env_id + "', config says '" +
                                cfg.env + "'");
  }
  LearnerState local{initial_policy(cfg), std::nullopt, std::nullopt};
  LearnerState& st = state ? *state : local;

  DeploymentReport report;
  report.cfg = cfg;
  const auto before = env.step_count();
  DeploymentRecord rec =
      improve_policy(dataset, latest ? *latest : dataset, st, cfg, env, deployment_index, deployed, metrics);
  rec.optimization_env_steps = env.step_count() - before;
  report.optimization_env_steps = rec.optimization_env_steps;
  rec.samples_collected = 0;
  rec.cumulative_samples = dataset.size();
  rec.eval = evaluate_policy(env, st.policy, cfg.eval_episodes, eval_seed(cfg));
  report.eval_env_steps = rec.eval.env_steps;
  emit_eval_row(metrics, cfg, clock, deployment_index, cfg.iterations + 1, rec.eval, dataset.size());
  if (metrics) metrics->flush();
  report.deployments.push_back(std::move(rec));
  report.final_policy = st.policy;
  report.total_env_steps = env.step_count();
  return report;
}

EfficiencySummary deployment_efficiency_report(const DeploymentReport& report) {
  EfficiencySummary s;
  s.deployments = static_cast<int>(report.deployments.size());
  s.curve.emplace_back(0, report.initial_eval.mean);
  for (const auto& d : report.deployments) {
    s.total_samples += d.samples_collected;
    s.curve.emplace_back(s.total_samples, d.eval.mean);
  }
  s.final_return = s.curve.back().second;
  s.distinct_collection_policies =
      std::set<std::uint64_t>(report.collection_hashes.begin(), report.collection_hashes.end()).size();
  return s;
}

nlohmann::json to_json(const EvalStats& e) {
  return {{"mean", e.mean}, {"std", e.std}, {"env_steps", e.env_steps}};
}

nlohmann::json to_json(const DeploymentReport& r) {
  nlohmann::json deps = nlohmann::json::array();
  for (const auto& d : r.deployments) {
    nlohmann::json members = nlohmann::json::array();
    for (const auto& m : d.dynamics.members) {
      members.push_back({{"train_mse", m.train_mse}, {"val_mse", m.val_mse}, {"epochs", m.epochs}});
    }
    std::size_t accepted = 0;
    double max_kl = 0.0, max_tv = 0.0;
    for (const auto& it : d.iterations) {
      if (!it.step.accepted) continue;
      ++accepted;
      max_kl = std::max(max_kl, it.step.mean_kl);
      max_tv = std::max(max_tv, it.step.max_state_tv);
    }
    nlohmann::json j{{"index", d.index},
                     {"samples_collected", d.samples_collected},
                     {"cumulative_samples", d.cumulative_samples},
                     {"collection_policy_hash", d.collection_policy_hash},
                     {"dynamics", members},
                     {"iterations", d.iterations.size()},
                     {"accepted_steps", accepted},
                     {"max_accepted_mean_kl", max_kl},
                     {"max_accepted_state_tv", max_tv},
                     {"initial_kl_to_deployed", d.initial_kl_to_deployed},
                     {"final_kl_to_deployed", d.final_kl_to_deployed},
                     {"drift_tv", d.drift_tv},
                     {"optimization_env_steps", d.optimization_env_steps},
                     {"eval", to_json(d.eval)}};
    if (d.bc) j["bc"] = {{"final_loss", d.bc->final_loss}, {"epochs", d.bc->epochs}, {"val_action_mse", d.bc->val_action_mse}};
    deps.push_back(std::move(j));
  }
  return {{"config", to_json(r.cfg)},
          {"initial_eval", to_json(r.initial_eval)},
          {"deployments", deps},
          {"collection_hashes", r.collection_hashes},
          {"collection_env_steps", r.collection_env_steps},
          {"eval_env_steps", r.eval_env_steps},
          {"optimization_env_steps", r.optimization_env_steps},
          {"total_env_steps", r.total_env_steps},
          {"summary", to_json(deployment_efficiency_report(r))}};
}

nlohmann::json to_json(const EfficiencySummary& s) {
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& [n, ret] : s.curve) curve.push_back({{"samples", n}, {"return", ret}});
  return {{"deployments", s.deployments},
          {"total_samples", s.total_samples},
          {"final_return", s.final_return},
          {"distinct_collection_policies", s.distinct_collection_policies},
          {"curve", curve}};
}

}  // namespace bremen
