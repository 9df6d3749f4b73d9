#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "bremen/config.hpp"
#include "bremen/dataset.hpp"
#include "bremen/dynamics.hpp"
#include "bremen/env.hpp"
#include "bremen/lqr.hpp"
#include "bremen/metrics.hpp"
#include "bremen/policy.hpp"
#include "bremen/trust_region.hpp"

namespace bremen {

struct EvalStats {
  double mean = 0.0;
  double std = 0.0;  // population std over episodes
  std::uint64_t env_steps = 0;
};

/// E seeded episodes (reset seed = seed + e) with deterministic mean actions.
EvalStats evaluate_policy(Env& env, const GaussianMlpPolicy& policy, int episodes, std::uint64_t seed);
/// Same protocol for a linear state-feedback controller a = -K s (clipped by the env).
EvalStats evaluate_controller(Env& env, const DMat& gain, int episodes, std::uint64_t seed);

struct IterationRecord {
  TrpoStepReport step;
  double kl_to_deployed = 0.0;  // mean KL(pi_t || deploying policy) on the latest batch states
  double model_return = 0.0;    // mean undiscounted imagined trajectory return
  std::size_t rollout_steps = 0;
  std::size_t nonfinite_incidents = 0;
};

struct DeploymentRecord {
  int index = 0;
  std::size_t samples_collected = 0;
  std::size_t cumulative_samples = 0;
  std::uint64_t collection_policy_hash = 0;
  EnsembleReport dynamics;
  std::optional<BcReport> bc;
  std::vector<IterationRecord> iterations;
  double initial_kl_to_deployed = 0.0;
  double final_kl_to_deployed = 0.0;
  double drift_tv = 0.0;  // max over latest-batch states of TV(pi_0 of this deployment, pi_T)
  std::uint64_t optimization_env_steps = 0;
  EvalStats eval;
};

struct DeploymentReport {
  ExperimentConfig cfg;
  EvalStats initial_eval;
  std::vector<DeploymentRecord> deployments;
  std::vector<std::uint64_t> collection_hashes;
  std::uint64_t collection_env_steps = 0;
  std::uint64_t eval_env_steps = 0;
  std::uint64_t optimization_env_steps = 0;
  std::uint64_t total_env_steps = 0;  // true env counter at the end of the run
  GaussianMlpPolicy final_policy;
};

/// What the learner carries between deployments.
struct LearnerState {
  GaussianMlpPolicy policy;
  std::optional<DynamicsEnsemble> ensemble;
  std::optional<MlpParams> bc_net;
};

/// One pass of ensemble fit, policy initialisation and T trust-region iterations.
/// `env` is only used for its pure reward and termination functions. `deployed` is
/// the policy that collected `latest` (KL tracking); may be null.
DeploymentRecord improve_policy(const Dataset& d_all, const Dataset& latest, LearnerState& state,
                                const ExperimentConfig& cfg, const Env& env, int deployment_index,
                                const GaussianMlpPolicy* deployed, MetricsWriter* metrics = nullptr);

/// Deployment-efficient loop: I deployments of B real samples each.
DeploymentReport run_deployment_loop(const ExperimentConfig& cfg, MetricsWriter* metrics = nullptr);

/// Offline mode on a fixed dataset. With `state` given, continues from it (and uses
/// `deployment_index`), which lets a caller rebuild the deployment loop from offline passes.
DeploymentReport run_offline(const Dataset& dataset, const ExperimentConfig& cfg,
                             MetricsWriter* metrics = nullptr, LearnerState* state = nullptr,
                             int deployment_index = 1, const Dataset* latest = nullptr,
                             const GaussianMlpPolicy* deployed = nullptr);

/// Initial random policy of a run (deployment 1 collects with it).
GaussianMlpPolicy initial_policy(const ExperimentConfig& cfg);
std::uint64_t collection_seed(const ExperimentConfig& cfg, int deployment_index);

struct EfficiencySummary {
  int deployments = 0;
  std::size_t total_samples = 0;
  double final_return = 0.0;
  std::vector<std::pair<std::size_t, double>> curve;  // (cumulative samples, eval return), I + 1 points
  std::size_t distinct_collection_policies = 0;
};

EfficiencySummary deployment_efficiency_report(const DeploymentReport& report);

nlohmann::json to_json(const EvalStats& e);
nlohmann::json to_json(const DeploymentReport& report);
nlohmann::json to_json(const EfficiencySummary& s);

}  // namespace bremen
