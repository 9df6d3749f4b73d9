#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bremen/rng.hpp"
#include "bremen/tensor.hpp"

namespace bremen {

struct Dataset;

/// a = tanh(mu(s)) + eps, eps ~ N(0, diag(sigma^2)), then clipped to [-1, 1].
/// sigma is stationary (never learned).
struct GaussianMlpPolicy {
  MlpParams mean_net;
  Vector sigma;

  static GaussianMlpPolicy random(std::size_t state_dim, std::size_t action_dim,
                                  const std::vector<std::size_t>& hidden, double sigma,
                                  std::uint64_t seed);

  std::size_t state_dim() const { return mean_net.in_dim(); }
  std::size_t action_dim() const { return mean_net.out_dim(); }

  /// tanh(mu(s)) for each row.
  Matrix mean_action(const Matrix& states) const;
  Vector mean_action(const Vector& state) const;

  /// Content hash of the parameters and sigma (identifies a data-collection policy).
  std::uint64_t hash() const;
};

struct ActionSample {
  Vector action;  // clipped to bounds
  Vector raw;     // pre-clip Gaussian sample
  double log_prob = 0.0;
};

ActionSample act(const GaussianMlpPolicy& policy, const Vector& state, Rng& rng);

struct BatchActions {
  Matrix action;  // clipped
  Matrix raw;
  Vector log_prob;
};
BatchActions act_batch(const GaussianMlpPolicy& policy, const Matrix& states, Rng& rng);

/// Log-density of pre-clip actions under N(mean, diag(sigma^2)).
Vector log_prob(const Matrix& mean, const Vector& sigma, const Matrix& raw_actions);

struct BcConfig {
  std::vector<std::size_t> hidden{64, 64};
  double learning_rate = 5e-4;
  std::size_t batch_size = 256;
  int max_epochs = 200;
  int patience = 10;
  std::size_t split_train = 2;
  std::size_t split_val = 1;
  /// Full-batch gradient steps on all of D, no validation split, no early stop.
  bool full_batch = false;
};

struct BcReport {
  double final_loss = 0.0;  // mean of 0.5 * ||a - pi(s)||^2 on the training part
  int epochs = 0;
  double val_action_mse = 0.0;
  std::vector<double> loss_curve;
};

/// Mean of 0.5 * ||a - tanh(net(s))||^2 over the rows.
double bc_loss(const MlpParams& net, const Matrix& states, const Matrix& actions);
/// Gradient of bc_loss with respect to the flat parameters; writes the loss when asked.
Vector bc_gradient(const MlpParams& net, const Matrix& states, const Matrix& actions,
                   double* loss = nullptr);

/// Fits tanh(mu(s)) to the dataset actions. Warm-starts from `init` when given.
std::pair<MlpParams, BcReport> behavior_clone(const Dataset& d, const BcConfig& cfg,
                                              std::uint64_t seed, const MlpParams* init = nullptr);

GaussianMlpPolicy init_target_policy(const MlpParams& bc_net, double sigma_init);

/// Per-state KL(pa || pb) between the pre-clip Gaussians.
Vector per_state_kl(const GaussianMlpPolicy& pa, const GaussianMlpPolicy& pb, const Matrix& states);
double mean_kl(const GaussianMlpPolicy& pa, const GaussianMlpPolicy& pb, const Matrix& states);

// Checkpoint = MLP checkpoint followed by "SIGM", u64 count, f64 values.
void save_policy(const std::string& path, const GaussianMlpPolicy& policy);
GaussianMlpPolicy load_policy(const std::string& path);

}  // namespace bremen
