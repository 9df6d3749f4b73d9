// bremen: experiment driver (collect | offline | loop | eval | check-theory | plot).
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "bremen/config.hpp"
#include "bremen/dataset.hpp"
#include "bremen/dynamics.hpp"
#include "bremen/metrics.hpp"
#include "bremen/orchestrator.hpp"
#include "bremen/policy.hpp"
#include "bremen/rng.hpp"
#include "bremen/theory.hpp"

namespace fs = std::filesystem;
using namespace bremen;

namespace {

struct Options {
  std::string verb;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string profile = "desk";
  std::string env = "pointmass";
  std::string out = "bremen_out";

  std::string dataset;
  std::size_t samples = 5000;
  std::string noise = "none";
  std::string policy;
  std::string behavior_policy;
  int episodes = 0;
  std::string run_dir;
  std::string metrics;
  std::vector<std::string> scalars;
  std::size_t pinsker_pairs = 1000;
};

std::string data_dir() {
  const char* d = std::getenv("BREMEN_DATA_DIR");
  return d && *d ? std::string(d) : std::string(".");
}

ExperimentConfig load_config(const Options& o) {
  ExperimentConfig cfg = profile_config(o.profile, o.env);
  if (!o.config_path.empty()) cfg = parse_config_file(o.config_path, cfg);
  if (o.seed) cfg.seed = *o.seed;
  cfg.validate();
  return cfg;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::string default_dataset_path(const ExperimentConfig& cfg) {
  return (fs::path(data_dir()) / (cfg.env + ".brds")).string();
}

int cmd_collect(const Options& o, const ExperimentConfig& cfg) {
  Env env(make_env_spec(cfg.env, cfg.horizon));
  const GaussianMlpPolicy behavior = o.behavior_policy.empty() ? initial_policy(cfg) : load_policy(o.behavior_policy);
  const std::uint64_t seed = derive_seed(cfg.seed, "cli_collect");
  Dataset d = o.noise == "none" ? collect_transitions(env, behavior, o.samples, seed, 0)
                                : synthesize_noisy_dataset(env, behavior, parse_noise_scheme(o.noise), o.samples, seed);
  const std::string path = o.dataset.empty() ? default_dataset_path(cfg) : o.dataset;
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  save_dataset(d, path);
  std::cout << "wrote " << d.size() << " transitions to " << path << '\n';
  return 0;
}

int cmd_offline(const Options& o, const ExperimentConfig& cfg) {
  const std::string path = o.dataset.empty() ? default_dataset_path(cfg) : o.dataset;
  const Dataset d = load_dataset(path);
  fs::create_directories(o.out);
  MetricsWriter metrics((fs::path(o.out) / "metrics.jsonl").string());
  LearnerState state{initial_policy(cfg), std::nullopt, std::nullopt};
  const DeploymentReport report = run_offline(d, cfg, &metrics, &state);
  nlohmann::json j = to_json(report);
  j["dataset"] = path;
  write_json(fs::path(o.out) / "report.json", j);
  save_policy((fs::path(o.out) / "policy.bin").string(), report.final_policy);
  save_ensemble((fs::path(o.out) / "ensemble.bin").string(), *state.ensemble);
  if (state.bc_net) save_mlp((fs::path(o.out) / "bc.bin").string(), *state.bc_net);
  std::cout << "offline: return " << report.deployments.back().eval.mean << " (std "
            << report.deployments.back().eval.std << "), optimization env steps "
            << report.optimization_env_steps << '\n';
  return 0;
}

int cmd_loop(const Options& o, const ExperimentConfig& cfg) {
  fs::create_directories(o.out);
  MetricsWriter metrics((fs::path(o.out) / "metrics.jsonl").string());
  const DeploymentReport report = run_deployment_loop(cfg, &metrics);
  write_json(fs::path(o.out) / "report.json", to_json(report));
  save_policy((fs::path(o.out) / "policy.bin").string(), report.final_policy);
  const auto summary = deployment_efficiency_report(report);
  std::cout << "loop: deployments " << summary.deployments << ", samples " << summary.total_samples
            << ", final return " << summary.final_return << '\n';
  return 0;
}

int cmd_eval(const Options& o, const ExperimentConfig& cfg) {
  if (o.policy.empty()) throw std::invalid_argument("eval needs --policy");
  Env env(make_env_spec(cfg.env, cfg.horizon));
  const GaussianMlpPolicy policy = load_policy(o.policy);
  const EvalStats ev = evaluate_policy(env, policy, o.episodes > 0 ? o.episodes : cfg.eval_episodes,
                                       derive_seed(cfg.seed, "eval"));
  std::cout << to_json(ev).dump() << '\n';
  return 0;
}

int cmd_check_theory(const Options& o, const ExperimentConfig& cfg) {
  const fs::path run = o.run_dir.empty() ? fs::path(o.out) : fs::path(o.run_dir);
  std::ifstream rf(run / "report.json");
  if (!rf) throw std::runtime_error("check-theory: no report.json in " + run.string());
  const nlohmann::json run_report = nlohmann::json::parse(rf);
  const std::string ds_path =
      o.dataset.empty() ? run_report.value("dataset", default_dataset_path(cfg)) : o.dataset;
  const Dataset d = load_dataset(ds_path);
  const MlpParams bc = load_mlp((run / "bc.bin").string());
  const DynamicsEnsemble ens = load_ensemble((run / "ensemble.bin").string());
  const GaussianMlpPolicy final_policy = load_policy((run / "policy.bin").string());

  BoundReport br;
  // Datasets from our own Gaussian collectors have a known entropy; anything else uses 0.
  const bool known_collector = d.meta.noise_scheme == "none" && d.meta.policy_hash != 0;
  br.entropy_assumed_zero = !known_collector;
  br.behavior_entropy = known_collector ? gaussian_entropy(Vector::Constant(static_cast<Eigen::Index>(d.action_dim), cfg.sigma)) : 0.0;
  br.dynamics_entropy = 0.0;
  br.epsilons = estimate_loss_epsilons(d, bc, ens, br.behavior_entropy, br.dynamics_entropy);

  const auto rows = read_metrics((run / "metrics.jsonl").string());
  double steps = 0.0;
  for (const auto& r : rows) {
    const auto acc = r.scalars.find("accepted");
    if (acc == r.scalars.end() || acc->second != 1.0) continue;
    steps += 1.0;
    const double tv = r.scalars.at("max_state_tv");
    br.max_step_tv = std::max(br.max_step_tv, tv);
    br.cumulative_step_tv += tv;
    br.model_return = r.scalars.at("model_return");
  }
  br.steps = steps;
  br.delta = cfg.delta;
  br.gamma = cfg.gamma;
  br.per_step_tv_limit = std::sqrt(cfg.delta / 2.0);
  br.bounds = proposition1_bounds(br.epsilons.eps_beta, br.epsilons.eps_phi, steps, cfg.delta);
  GaussianMlpPolicy bc_policy{bc, final_policy.sigma};
  br.measured_tv_behavior_to_final = policy_tv(bc_policy, final_policy, d.states()).maxCoeff();
  for (const auto& t : d.transitions) br.r_max = std::max(br.r_max, std::abs(t.r));
  br.return_gap_penalty = return_gap_penalty(br.bounds.model_error, br.bounds.policy_shift, cfg.gamma, br.r_max);
  br.true_return_lower_bound = br.model_return - br.return_gap_penalty;

  Rng rng(derive_seed(cfg.seed, "pinsker"));
  std::vector<GaussianPair> pairs;
  for (std::size_t i = 0; i < o.pinsker_pairs; ++i) {
    pairs.push_back({Vector::Constant(1, rng.uniform(-3, 3)), Vector::Constant(1, rng.uniform(0.1, 3)),
                     Vector::Constant(1, rng.uniform(-3, 3)), Vector::Constant(1, rng.uniform(0.1, 3))});
  }
  const PinskerResult pk = pinsker_tv_check(pairs);
  br.pinsker_pairs = pk.pairs;
  br.pinsker_violations = pk.violations;

  nlohmann::json j = to_json(br);
  write_json(run / "bounds.json", j);
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_plot(const Options& o) {
  const std::string metrics = o.metrics.empty() ? (fs::path(o.out) / "metrics.jsonl").string() : o.metrics;
  const auto paths = write_plots(metrics, (fs::path(o.out) / "plots").string(), o.scalars);
  for (const auto& p : paths) std::cout << p << '\n';
  return 0;
}

int run_command(const Options& o) {
  if (o.verb == "plot") return cmd_plot(o);
  const ExperimentConfig cfg = load_config(o);
  if (o.verb == "collect") return cmd_collect(o, cfg);
  if (o.verb == "offline") return cmd_offline(o, cfg);
  if (o.verb == "loop") return cmd_loop(o, cfg);
  if (o.verb == "eval") return cmd_eval(o, cfg);
  if (o.verb == "check-theory") return cmd_check_theory(o, cfg);
  throw std::invalid_argument("unknown verb " + o.verb);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BREMEN experiments: behavior-regularized model-ensemble RL at desk scale"};
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed = 0;

  const auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "INI config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "master seed")->each([&](const std::string&) { o.seed = seed; });
    sub->add_option("--profile", o.profile, "desk | paper")->check(CLI::IsMember({"desk", "paper"}));
    sub->add_option("--env", o.env, "pointmass | pendulum | gatewalker")
        ->check(CLI::IsMember({"pointmass", "pendulum", "gatewalker"}));
    sub->add_option("--out", o.out, "output directory");
  };

  auto* collect = app.add_subcommand("collect", "collect a dataset with a Gaussian behavior policy");
  common(collect);
  collect->add_option("--dataset", o.dataset, "output path (default $BREMEN_DATA_DIR/<env>.brds)");
  collect->add_option("--samples", o.samples, "transitions to collect");
  collect->add_option("--noise", o.noise, "none | eps1 | eps3 | gaussian1 | gaussian3 | random");
  collect->add_option("--behavior", o.behavior_policy, "behavior policy checkpoint (default: random init)");

  auto* offline = app.add_subcommand("offline", "train on a fixed dataset without touching the env");
  common(offline);
  offline->add_option("--dataset", o.dataset, "dataset path (default $BREMEN_DATA_DIR/<env>.brds)");

  auto* loop = app.add_subcommand("loop", "deployment-efficient loop");
  common(loop);

  auto* eval = app.add_subcommand("eval", "evaluate a policy checkpoint");
  common(eval);
  eval->add_option("--policy", o.policy, "policy checkpoint")->required();
  eval->add_option("--episodes", o.episodes, "episodes (default from config)");

  auto* theory = app.add_subcommand("check-theory", "error-bound report for an offline run");
  common(theory);
  theory->add_option("--run", o.run_dir, "offline run directory (default --out)");
  theory->add_option("--dataset", o.dataset, "dataset path (default: the one the run used)");
  theory->add_option("--pinsker-pairs", o.pinsker_pairs, "random 1-D Gaussian pairs");

  auto* plot = app.add_subcommand("plot", "one SVG per scalar of a metrics file");
  common(plot);
  plot->add_option("--metrics", o.metrics, "metrics JSONL (default <out>/metrics.jsonl)");
  plot->add_option("--scalar", o.scalars, "scalar names (default: all)");

  CLI11_PARSE(app, argc, argv);
  o.verb = app.get_subcommands().front()->get_name();
  try {
    return run_command(o);
  } catch (const std::exception& e) {
    std::cerr << "bremen " << o.verb << ": " << e.what() << '\n';
    return 1;
  }
}
