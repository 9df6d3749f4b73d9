#include "bremen/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace bremen {

namespace {

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

struct KeySpec {
  std::string section;
  Setter set;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  return out;
}

long long to_integer(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
  return out;
}

std::size_t to_count(const std::string& key, const std::string& v) {
  const long long x = to_integer(key, v);
  if (x < 0) throw ConfigError("key '" + key + "' must be >= 0, got " + v);
  return static_cast<std::size_t>(x);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("key '" + key + "': expected a boolean, got '" + v + "'");
}

std::vector<std::size_t> to_widths(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::string item;
  std::istringstream in(v);
  while (std::getline(in, item, ',')) out.push_back(to_count(key, trim(item)));
  if (out.empty()) throw ConfigError("key '" + key + "': expected comma-separated widths");
  return out;
}

#define BREMEN_INT(field) [](ExperimentConfig& c, const std::string& v) { c.field = static_cast<int>(to_integer(#field, v)); }
#define BREMEN_COUNT(field) [](ExperimentConfig& c, const std::string& v) { c.field = to_count(#field, v); }
#define BREMEN_REAL(field) [](ExperimentConfig& c, const std::string& v) { c.field = to_double(#field, v); }
#define BREMEN_BOOL(field) [](ExperimentConfig& c, const std::string& v) { c.field = to_bool(#field, v); }

const std::map<std::string, KeySpec>& key_table() {
  static const std::map<std::string, KeySpec> table{
      {"env", {"env", [](ExperimentConfig& c, const std::string& v) { c.env = v; }}},
      {"horizon", {"env", BREMEN_INT(horizon)}},
      {"deployments", {"experiment", BREMEN_INT(deployments)}},
      {"samples_per_deployment", {"experiment", BREMEN_COUNT(samples_per_deployment)}},
      {"iterations", {"experiment", BREMEN_INT(iterations)}},
      {"seed", {"experiment", [](ExperimentConfig& c, const std::string& v) {
                  c.seed = static_cast<std::uint64_t>(to_count("seed", v));
                }}},
      {"mode", {"experiment", [](ExperimentConfig& c, const std::string& v) { c.mode = parse_mode(v); }}},
      {"kl_alpha", {"experiment", BREMEN_REAL(kl_alpha)}},
      {"eval_episodes", {"experiment", BREMEN_INT(eval_episodes)}},
      {"threads", {"experiment", BREMEN_INT(threads)}},
      {"record_wall_clock", {"experiment", BREMEN_BOOL(record_wall_clock)}},
      {"delta", {"policy", BREMEN_REAL(delta)}},
      {"gamma", {"policy", BREMEN_REAL(gamma)}},
      {"lambda", {"policy", BREMEN_REAL(lambda)}},
      {"sigma", {"policy", BREMEN_REAL(sigma)}},
      {"rollout_length", {"policy", BREMEN_INT(rollout_length)}},
      {"policy_batch", {"policy", BREMEN_COUNT(policy_batch)}},
      {"policy_hidden", {"policy", [](ExperimentConfig& c, const std::string& v) {
                           c.policy_hidden = to_widths("policy_hidden", v);
                         }}},
      {"bc_lr", {"policy", BREMEN_REAL(bc_lr)}},
      {"bc_batch", {"policy", BREMEN_COUNT(bc_batch)}},
      {"bc_max_epochs", {"policy", BREMEN_INT(bc_max_epochs)}},
      {"bc_patience", {"policy", BREMEN_INT(bc_patience)}},
      {"bc_on_all_data", {"policy", BREMEN_BOOL(bc_on_all_data)}},
      {"cg_damping", {"policy", BREMEN_REAL(cg_damping)}},
      {"cg_iterations", {"policy", BREMEN_INT(cg_iterations)}},
      {"kl_slack", {"policy", BREMEN_REAL(kl_slack)}},
      {"enforce_state_tv", {"policy", BREMEN_BOOL(enforce_state_tv)}},
      {"ensemble_size", {"dynamics", BREMEN_COUNT(ensemble_size)}},
      {"dynamics_hidden", {"dynamics", [](ExperimentConfig& c, const std::string& v) {
                             c.dynamics_hidden = to_widths("dynamics_hidden", v);
                           }}},
      {"dynamics_lr", {"dynamics", BREMEN_REAL(dynamics_lr)}},
      {"dynamics_batch", {"dynamics", BREMEN_COUNT(dynamics_batch)}},
      {"dynamics_max_epochs", {"dynamics", BREMEN_INT(dynamics_max_epochs)}},
      {"dynamics_patience", {"dynamics", BREMEN_INT(dynamics_patience)}},
      {"dynamics_warm_start", {"dynamics", BREMEN_BOOL(dynamics_warm_start)}},
  };
  return table;
}

#undef BREMEN_INT
#undef BREMEN_COUNT
#undef BREMEN_REAL
#undef BREMEN_BOOL

void apply_key(ExperimentConfig& cfg, const std::string& section, const std::string& key,
               const std::string& value) {
  const auto& table = key_table();
  const auto it = table.find(key);
  if (it == table.end()) {
    throw ConfigError("unknown config key '" + (section.empty() ? key : section + "." + key) + "'");
  }
  if (!section.empty() && it->second.section != section) {
    throw ConfigError("config key '" + key + "' belongs in section [" + it->second.section + "], found in [" +
                      section + "]");
  }
  it->second.set(cfg, trim(value));
}

}  // namespace

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::Bremen: return "bremen";
    case Mode::MetrpoOffline: return "metrpo_offline";
    case Mode::ExplicitKl: return "explicit_kl";
  }
  return "?";
}

Mode parse_mode(const std::string& name) {
  if (name == "bremen") return Mode::Bremen;
  if (name == "metrpo_offline" || name == "metrpo") return Mode::MetrpoOffline;
  if (name == "explicit_kl") return Mode::ExplicitKl;
  throw ConfigError("key 'mode': unknown mode '" + name + "' (bremen | metrpo_offline | explicit_kl)");
}

void ExperimentConfig::validate() const {
  const auto fail = [](const std::string& key, const std::string& why) {
    throw ConfigError("invalid config: '" + key + "' " + why);
  };
  try {
    make_env_spec(env, horizon);
  } catch (const std::exception& e) {
    fail("env", std::string("rejected: ") + e.what());
  }
  if (horizon < 1) fail("horizon", "must be >= 1");
  if (deployments < 1) fail("deployments", "must be >= 1");
  if (samples_per_deployment < 1) fail("samples_per_deployment", "must be >= 1");
  if (iterations < 0) fail("iterations", "must be >= 0");
  if (!(delta > 0.0)) fail("delta", "must be > 0");
  if (!(gamma > 0.0 && gamma < 1.0)) fail("gamma", "must be in (0, 1)");
  if (!(lambda >= 0.0 && lambda <= 1.0)) fail("lambda", "must be in [0, 1]");
  if (ensemble_size < 1) fail("ensemble_size", "must be >= 1");
  if (!(sigma > 0.0)) fail("sigma", "must be > 0");
  if (rollout_length < 1) fail("rollout_length", "must be >= 1");
  if (policy_batch < 1) fail("policy_batch", "must be >= 1");
  if (!(dynamics_lr > 0.0)) fail("dynamics_lr", "must be > 0");
  if (!(bc_lr > 0.0)) fail("bc_lr", "must be > 0");
  if (dynamics_batch < 1) fail("dynamics_batch", "must be >= 1");
  if (bc_batch < 1) fail("bc_batch", "must be >= 1");
  if (dynamics_max_epochs < 1) fail("dynamics_max_epochs", "must be >= 1");
  if (bc_max_epochs < 1) fail("bc_max_epochs", "must be >= 1");
  if (dynamics_patience < 1) fail("dynamics_patience", "must be >= 1");
  if (bc_patience < 1) fail("bc_patience", "must be >= 1");
  for (auto w : dynamics_hidden) if (w == 0) fail("dynamics_hidden", "widths must be > 0");
  for (auto w : policy_hidden) if (w == 0) fail("policy_hidden", "widths must be > 0");
  if (!(cg_damping >= 0.0)) fail("cg_damping", "must be >= 0");
  if (cg_iterations < 1) fail("cg_iterations", "must be >= 1");
  if (!(kl_slack >= 1.0)) fail("kl_slack", "must be >= 1");
  if (!(kl_alpha >= 0.0)) fail("kl_alpha", "must be >= 0");
  if (eval_episodes < 1) fail("eval_episodes", "must be >= 1");
  if (threads < 1) fail("threads", "must be >= 1");
}

DynamicsConfig ExperimentConfig::dynamics_config() const {
  DynamicsConfig c;
  c.ensemble_size = ensemble_size;
  c.hidden = dynamics_hidden;
  c.learning_rate = dynamics_lr;
  c.batch_size = dynamics_batch;
  c.max_epochs = dynamics_max_epochs;
  c.patience = dynamics_patience;
  c.threads = threads;
  return c;
}

BcConfig ExperimentConfig::bc_config() const {
  BcConfig c;
  c.hidden = policy_hidden;
  c.learning_rate = bc_lr;
  c.batch_size = bc_batch;
  c.max_epochs = bc_max_epochs;
  c.patience = bc_patience;
  return c;
}

TrpoConfig ExperimentConfig::trpo_config() const {
  TrpoConfig c;
  c.max_kl = delta;
  c.cg_iterations = cg_iterations;
  c.cg_damping = cg_damping;
  c.kl_slack = kl_slack;
  c.enforce_state_tv = enforce_state_tv;
  return c;
}

RolloutConfig ExperimentConfig::rollout_config() const {
  return RolloutConfig{rollout_length, policy_batch};
}

ExperimentConfig desk_profile(const std::string& env) {
  ExperimentConfig c;
  c.env = env;
  c.profile = "desk";
  return c;
}

ExperimentConfig paper_profile(const std::string& env) {
  ExperimentConfig c;
  c.env = env;
  c.profile = "paper";
  c.samples_per_deployment = 200000;
  c.policy_batch = 50000;
  c.dynamics_hidden = {1024, 1024};
  c.policy_hidden = {200, 200};
  c.gamma = 0.99;
  c.sigma = 0.1;
  c.ensemble_size = 5;
  c.horizon = 1000;
  if (env == "gatewalker") {
    c.deployments = 10;
    c.iterations = 2000;
    c.rollout_length = 1000;
    c.delta = 0.05;
    c.lambda = 0.95;
  } else if (env == "pointmass") {
    c.deployments = 5;
    c.iterations = 2000;
    c.rollout_length = 250;
    c.delta = 0.1;
    c.lambda = 0.95;
  } else if (env == "pendulum") {
    c.deployments = 5;
    c.iterations = 2000;
    c.rollout_length = 1000;
    c.delta = 0.05;
    c.lambda = 0.97;
  } else {
    throw ConfigError("key 'env': no paper profile for '" + env + "'");
  }
  return c;
}

ExperimentConfig profile_config(const std::string& profile, const std::string& env) {
  if (profile == "desk") return desk_profile(env);
  if (profile == "paper") return paper_profile(env);
  throw ConfigError("unknown profile '" + profile + "' (desk | paper)");
}

ExperimentConfig parse_config_text(const std::string& text, ExperimentConfig base) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax error: ") + e.what());
  }
  static const std::vector<std::string> sections{"env", "experiment", "policy", "dynamics"};
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      apply_key(base, "", name, node.data());
      continue;
    }
    if (std::find(sections.begin(), sections.end(), name) == sections.end()) {
      throw ConfigError("unknown config section [" + name + "]");
    }
    for (const auto& [key, leaf] : node) apply_key(base, name, key, leaf.data());
  }
  base.validate();
  return base;
}

ExperimentConfig parse_config_file(const std::string& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), std::move(base));
}

nlohmann::json to_json(const ExperimentConfig& c) {
  return {
      {"profile", c.profile},
      {"env", c.env},
      {"horizon", c.horizon},
      {"deployments", c.deployments},
      {"samples_per_deployment", c.samples_per_deployment},
      {"iterations", c.iterations},
      {"delta", c.delta},
      {"gamma", c.gamma},
      {"lambda", c.lambda},
      {"ensemble_size", c.ensemble_size},
      {"sigma", c.sigma},
      {"rollout_length", c.rollout_length},
      {"policy_batch", c.policy_batch},
      {"dynamics_hidden", c.dynamics_hidden},
      {"dynamics_lr", c.dynamics_lr},
      {"dynamics_batch", c.dynamics_batch},
      {"dynamics_max_epochs", c.dynamics_max_epochs},
      {"dynamics_patience", c.dynamics_patience},
      {"dynamics_warm_start", c.dynamics_warm_start},
      {"policy_hidden", c.policy_hidden},
      {"bc_lr", c.bc_lr},
      {"bc_batch", c.bc_batch},
      {"bc_max_epochs", c.bc_max_epochs},
      {"bc_patience", c.bc_patience},
      {"bc_on_all_data", c.bc_on_all_data},
      {"cg_damping", c.cg_damping},
      {"cg_iterations", c.cg_iterations},
      {"kl_slack", c.kl_slack},
      {"enforce_state_tv", c.enforce_state_tv},
      {"mode", to_string(c.mode)},
      {"kl_alpha", c.kl_alpha},
      {"eval_episodes", c.eval_episodes},
      {"seed", c.seed},
      {"threads", c.threads},
      {"record_wall_clock", c.record_wall_clock},
  };
}

}  // namespace bremen
