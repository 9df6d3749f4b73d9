#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "bremen/dataset.hpp"
#include "bremen/env.hpp"
#include "bremen/policy.hpp"
#include "bremen/tensor.hpp"

namespace bremen {

/// Shared input/output scaling for every ensemble member. Std entries are floored at 1e-6.
/// Outputs are state deltas scaled by delta_std (no centering), so a zero network
/// predicts s' = s.
struct Normalizer {
  Vector state_mean, state_std;
  Vector action_mean, action_std;
  Vector delta_std;

  static Normalizer fit(const Dataset& d);
  Matrix inputs(const Matrix& states, const Matrix& actions) const;
};

struct DynamicsEnsemble {
  std::vector<MlpParams> members;
  Normalizer normalizer;
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;

  std::size_t size() const { return members.size(); }
};

/// Member loss on normalized inputs and scaled-delta targets: mean 0.5 * ||net(x) - y||^2.
double dynamics_loss(const MlpParams& net, const Matrix& inputs, const Matrix& targets);
Vector dynamics_gradient(const MlpParams& net, const Matrix& inputs, const Matrix& targets,
                         double* loss = nullptr);

struct DynamicsConfig {
  std::size_t ensemble_size = 5;
  std::vector<std::size_t> hidden{128, 128};
  double learning_rate = 1e-3;
  std::size_t batch_size = 256;
  int max_epochs = 100;
  int patience = 5;
  std::size_t split_train = 2;
  std::size_t split_val = 1;
  /// Members trained concurrently; results do not depend on this.
  int threads = 1;
};

struct MemberReport {
  double train_mse = 0.0;  // raw state units, mean over samples and dims
  double val_mse = 0.0;
  int epochs = 0;
};

struct EnsembleReport {
  std::vector<MemberReport> members;
};

/// Fits K members on a shared train/val split of `d_all`. Each member has its own
/// initialization and epoch ordering. When `warm_start` is given its member weights
/// are the starting point.
std::pair<DynamicsEnsemble, EnsembleReport> train_ensemble(const Dataset& d_all,
                                                           const DynamicsConfig& cfg,
                                                           std::uint64_t seed,
                                                           const DynamicsEnsemble* warm_start = nullptr);

Vector predict_next(const DynamicsEnsemble& ens, std::size_t member, const Vector& s, const Vector& a);
Matrix predict_next_batch(const DynamicsEnsemble& ens, std::size_t member, const Matrix& states,
                          const Matrix& actions);

/// Mean squared one-step error of one member on (s, a, s') triples, raw state units.
double one_step_mse(const DynamicsEnsemble& ens, std::size_t member, const Dataset& d);

struct Trajectory {
  std::size_t begin = 0;  // row range in RolloutBatch
  std::size_t end = 0;
  bool terminated = false;
  Vector final_state;  // state after the last step (bootstrap target on truncation)
  int final_time = 0;
};

struct RolloutBatch {
  Matrix states;       // s_t
  Matrix actions;      // executed (clipped) a_t
  Matrix raw_actions;  // pre-clip samples, used for likelihood ratios
  Vector rewards;
  Vector log_probs;    // under the rollout policy
  std::vector<int> time_index;
  std::vector<std::uint32_t> model_index;
  std::vector<Trajectory> trajectories;
  std::size_t nonfinite_incidents = 0;

  std::size_t steps() const { return static_cast<std::size_t>(states.rows()); }
};

struct RolloutConfig {
  int length = 50;
  std::size_t min_steps = 5000;
};

/// Optional replacement for the learned members (e.g. true dynamics in tests).
/// Signature: (member index, states, actions) -> next states.
using TransitionOverride = std::function<Matrix(std::size_t, const Matrix&, const Matrix&)>;

/// Imagined rollouts: a_t ~ pi(.|s_t), member i drawn uniformly per step per branch,
/// r_t = reward_fn(s_t, a_t), branch stops at termination_fn(s_{t+1}) or `length` steps.
/// Branches start from rows of `start_pool`, drawn uniformly. Keeps spawning waves of
/// branches until at least `min_steps` steps exist. Touches only the env's pure
/// reward and termination functions.
RolloutBatch imaginary_rollout(const DynamicsEnsemble& ens, const Env& env,
                               const GaussianMlpPolicy& policy, const Matrix& start_pool,
                               const RolloutConfig& cfg, std::uint64_t seed,
                               const TransitionOverride& override_dynamics = {});

// "BREN", u32 version, u32 K, K MLP checkpoints, then "NORM" and the normalizer vectors.
void save_ensemble(const std::string& path, const DynamicsEnsemble& ens);
DynamicsEnsemble load_ensemble(const std::string& path);

}  // namespace bremen
