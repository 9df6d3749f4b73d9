#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "bremen/orchestrator.hpp"

using namespace bremen;

namespace {

ExperimentConfig tiny(int deployments = 2, int iterations = 3) {
  ExperimentConfig c = desk_profile("pointmass");
  c.deployments = deployments;
  c.samples_per_deployment = 200;
  c.iterations = iterations;
  c.policy_batch = 400;
  c.rollout_length = 10;
  c.ensemble_size = 2;
  c.dynamics_hidden = {16, 16};
  c.dynamics_max_epochs = 5;
  c.policy_hidden = {8, 8};
  c.bc_max_epochs = 5;
  c.eval_episodes = 2;
  c.horizon = 50;
  c.seed = 11;
  return c;
}

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_SUITE("orchestrator") {

TEST_CASE("loop collects I*B samples with I distinct policies") {
  const auto cfg = tiny(5, 2);
  const auto rep = run_deployment_loop(cfg);
  REQUIRE(rep.deployments.size() == 5);
  CHECK(rep.collection_env_steps == 1000);
  CHECK(std::set<std::uint64_t>(rep.collection_hashes.begin(), rep.collection_hashes.end()).size() == 5);
  CHECK(rep.collection_hashes.front() == initial_policy(cfg).hash());
  CHECK(rep.optimization_env_steps == 0);
  // the only real steps are collection plus evaluation (6 evaluations of E full episodes)
  CHECK(rep.total_env_steps == 1000 + 6 * 2 * 50);
  CHECK(rep.total_env_steps == rep.collection_env_steps + rep.eval_env_steps);
  for (int i = 0; i < 5; ++i) CHECK(rep.deployments[i].cumulative_samples == 200u * (i + 1));

  const auto summary = deployment_efficiency_report(rep);
  CHECK(summary.deployments == 5);
  CHECK(summary.total_samples == 1000);
  CHECK(summary.curve.size() == 6);
  CHECK(summary.distinct_collection_policies == 5);
  CHECK(summary.curve.front().first == 0);
}

TEST_CASE("efficiency arithmetic for I=10, B=1000") {
  DeploymentReport rep;
  rep.cfg.deployments = 10;
  rep.cfg.samples_per_deployment = 1000;
  for (int i = 1; i <= 10; ++i) {
    DeploymentRecord r;
    r.index = i;
    r.samples_collected = 1000;
    r.cumulative_samples = 1000u * i;
    rep.deployments.push_back(r);
    rep.collection_hashes.push_back(static_cast<std::uint64_t>(i));
  }
  const auto s = deployment_efficiency_report(rep);
  CHECK(s.deployments == 10);
  CHECK(s.total_samples == 10000);
  CHECK(s.curve.size() == 11);
}

TEST_CASE("zero iterations leave the cloned policy") {
  auto cfg = tiny(1, 0);
  Env env(make_env_spec("pointmass", cfg.horizon));
  const auto pi0 = initial_policy(cfg);
  const auto d = collect_transitions(env, pi0, 300, 1, 1);
  LearnerState st{pi0, std::nullopt, std::nullopt};
  const auto rec = improve_policy(d, d, st, cfg, env, 1, &pi0);
  REQUIRE(st.bc_net.has_value());
  CHECK(st.policy.mean_net == *st.bc_net);
  CHECK(rec.iterations.empty());
  CHECK(rec.bc.has_value());
}

TEST_CASE("metrpo mode skips cloning") {
  auto cfg = tiny(1, 2);
  cfg.mode = Mode::MetrpoOffline;
  const auto rep = run_deployment_loop(cfg);
  CHECK_FALSE(rep.deployments[0].bc.has_value());
}

TEST_CASE("offline mode never steps the real env during optimisation") {
  auto cfg = tiny(1, 3);
  Env env(make_env_spec("pointmass", cfg.horizon));
  const auto d = collect_transitions(env, initial_policy(cfg), 400, 3, 1);
  const auto rep = run_offline(d, cfg);
  CHECK(rep.optimization_env_steps == 0);
  CHECK(rep.total_env_steps == rep.eval_env_steps);
  CHECK(rep.deployments.size() == 1);
  auto wrong = d;
  wrong.env_id = "pendulum";
  CHECK_THROWS(run_offline(wrong, cfg));
}

TEST_CASE("offline passes with recollection rebuild the deployment loop") {
  const auto cfg = tiny(3, 3);
  const auto loop = run_deployment_loop(cfg);

  Env env(make_env_spec(cfg.env, cfg.horizon));
  LearnerState st{initial_policy(cfg), std::nullopt, std::nullopt};
  Dataset all = make_empty_dataset(env.spec()), latest = make_empty_dataset(env.spec());
  for (int i = 1; i <= cfg.deployments; ++i) {
    const auto deployed = st.policy;
    const auto batch = collect_transitions(env, deployed, cfg.samples_per_deployment, collection_seed(cfg, i),
                                           static_cast<std::uint32_t>(i));
    append_batch(all, latest, batch);
    const auto rep = run_offline(all, cfg, nullptr, &st, i, &latest, &deployed);
    CHECK(rep.final_policy.mean_net == st.policy.mean_net);
    CHECK(rep.deployments[0].eval.mean == loop.deployments[static_cast<std::size_t>(i - 1)].eval.mean);
  }
  CHECK(st.policy.mean_net == loop.final_policy.mean_net);
}

TEST_CASE("identical config reproduces the metrics stream") {
  const auto dir = std::filesystem::temp_directory_path() / "bremen_test_det";
  std::filesystem::create_directories(dir);
  const auto cfg = tiny(2, 3);
  for (const char* name : {"a.jsonl", "b.jsonl"}) {
    MetricsWriter w((dir / name).string());
    (void)run_deployment_loop(cfg, &w);
  }
  const auto a = slurp((dir / "a.jsonl").string());
  CHECK(!a.empty());
  CHECK(a == slurp((dir / "b.jsonl").string()));
  std::filesystem::remove_all(dir);
}

TEST_CASE("evaluation protocol") {
  Env env(make_env_spec("pointmass"));
  const auto pi = GaussianMlpPolicy::random(4, 2, {8}, 0.1, 1);
  const auto a = evaluate_policy(env, pi, 3, 5);
  const auto b = evaluate_policy(env, pi, 3, 5);
  CHECK(a.mean == b.mean);
  CHECK(a.std == b.std);
  CHECK(a.env_steps == 3 * 200);

  auto spec = make_env_spec("pointmass");
  auto& p = std::get<PointMassParams>(spec.params);
  p.q_diag.setZero();
  p.r_diag.setZero();
  Env zero(spec);
  const auto z = evaluate_policy(zero, pi, 4, 0);
  CHECK(z.mean == 0.0);
  CHECK(z.std == 0.0);
}

TEST_CASE("Riccati controller evaluates near the finite-horizon optimum") {
  const auto spec = make_env_spec("pointmass");
  Env env(spec);
  const auto gain = solve_discounted_riccati(pointmass_system(spec), 0.9999).gain;
  const auto stats = evaluate_controller(env, gain, 10, 3);
  const double opt = oracle_finite_horizon_return(spec, 10, 3);
  CHECK(stats.mean <= opt + 1e-9);
  CHECK(std::abs(stats.mean - opt) <= 0.02 * std::abs(opt));
}

}

TEST_SUITE("offline_quality") {

TEST_CASE("offline training beats the policy that collected the data") {
  ExperimentConfig cfg = desk_profile("pointmass");
  cfg.iterations = 60;
  cfg.seed = 2;
  Env env(make_env_spec("pointmass", cfg.horizon));
  const auto behavior = initial_policy(cfg);
  const auto d = collect_transitions(env, behavior, 5000, 4, 1);
  const auto behavior_eval = evaluate_policy(env, behavior, cfg.eval_episodes, 123);
  const auto rep = run_offline(d, cfg);
  const auto learned_eval = evaluate_policy(env, rep.final_policy, cfg.eval_episodes, 123);
  CHECK(learned_eval.mean > behavior_eval.mean);
}

}
