#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "bremen/dynamics.hpp"
#include "bremen/policy.hpp"
#include "bremen/trust_region.hpp"

namespace bremen {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Mode { Bremen, MetrpoOffline, ExplicitKl };

std::string to_string(Mode mode);
Mode parse_mode(const std::string& name);

struct ExperimentConfig {
  std::string profile = "desk";
  std::string env = "pointmass";
  int horizon = 200;

  int deployments = 5;                          // I
  std::size_t samples_per_deployment = 2000;    // B
  int iterations = 200;                         // T per deployment
  double delta = 0.05;
  double gamma = 0.99;
  double lambda = 0.95;
  std::size_t ensemble_size = 5;                // K
  double sigma = 0.1;                           // collection / target policy noise
  int rollout_length = 50;                      // L
  std::size_t policy_batch = 5000;

  std::vector<std::size_t> dynamics_hidden{128, 128};
  double dynamics_lr = 1e-3;
  std::size_t dynamics_batch = 256;
  int dynamics_max_epochs = 100;
  int dynamics_patience = 5;
  bool dynamics_warm_start = true;

  std::vector<std::size_t> policy_hidden{32, 32};
  double bc_lr = 5e-4;
  std::size_t bc_batch = 256;
  int bc_max_epochs = 200;
  int bc_patience = 10;
  bool bc_on_all_data = false;  // BC on D_all instead of the latest batch D

  double cg_damping = 0.1;
  int cg_iterations = 10;
  double kl_slack = 1.5;
  bool enforce_state_tv = true;

  Mode mode = Mode::Bremen;
  double kl_alpha = 0.3;  // only for explicit_kl

  int eval_episodes = 10;
  std::uint64_t seed = 0;
  int threads = 1;
  bool record_wall_clock = false;

  void validate() const;

  DynamicsConfig dynamics_config() const;
  BcConfig bc_config() const;
  TrpoConfig trpo_config() const;
  RolloutConfig rollout_config() const;
};

ExperimentConfig desk_profile(const std::string& env = "pointmass");
/// Large-scale settings mapped onto the desk environments
/// (gatewalker <- Walker2d, pointmass <- HalfCheetah, pendulum <- Ant).
ExperimentConfig paper_profile(const std::string& env = "pointmass");
ExperimentConfig profile_config(const std::string& profile, const std::string& env);

/// INI text: optional [sections] used for grouping, key = value lines, '#' or ';' comments.
/// Keys override `base`; unknown keys or sections raise ConfigError naming them. The
/// result is validated.
ExperimentConfig parse_config_text(const std::string& text, ExperimentConfig base);
ExperimentConfig parse_config_file(const std::string& path, ExperimentConfig base);

nlohmann::json to_json(const ExperimentConfig& cfg);

}  // namespace bremen
