#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "bremen/config.hpp"
#include "bremen/lqr.hpp"
#include "bremen/orchestrator.hpp"
#include "bremen/theory.hpp"

namespace py = pybind11;
using namespace bremen;

namespace {

// Python values go through the config parser so validation and error messages match the CLI.
std::string config_value(const py::handle& v) {
  if (py::isinstance<py::bool_>(v)) return v.cast<bool>() ? "true" : "false";
  if (py::isinstance<py::list>(v) || py::isinstance<py::tuple>(v)) {
    std::string out;
    for (const auto& item : v) out += (out.empty() ? "" : ",") + py::str(item).cast<std::string>();
    return out;
  }
  return py::str(v).cast<std::string>();
}

ExperimentConfig make_config(const std::string& profile, const std::string& env, const py::kwargs& overrides) {
  std::ostringstream text;
  for (const auto& [k, v] : overrides) text << k.cast<std::string>() << " = " << config_value(v) << "\n";
  auto cfg = parse_config_text(text.str(), profile_config(profile, env));
  cfg.validate();
  return cfg;
}

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

}  // namespace

PYBIND11_MODULE(_bremen, m) {
  m.doc() = "BREMEN core bindings";
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("config", [](const std::string& profile, const std::string& env, const py::kwargs& kw) {
        return to_py(to_json(make_config(profile, env, kw)));
      }, py::arg("profile") = "desk", py::arg("env") = "pointmass");

  m.def("run_loop", [](const std::string& profile, const std::string& env, const std::string& metrics,
                       const py::kwargs& kw) {
        const auto cfg = make_config(profile, env, kw);
        DeploymentReport rep;
        {
          py::gil_scoped_release release;
          if (metrics.empty()) {
            rep = run_deployment_loop(cfg);
          } else {
            MetricsWriter w(metrics);
            rep = run_deployment_loop(cfg, &w);
          }
        }
        auto out = to_json(rep);
        out["efficiency"] = to_json(deployment_efficiency_report(rep));
        return to_py(out);
      }, py::arg("profile") = "desk", py::arg("env") = "pointmass", py::arg("metrics") = "");

  m.def("run_offline", [](const std::string& dataset_path, const std::string& profile, const py::kwargs& kw) {
        const auto d = load_dataset(dataset_path);
        const auto cfg = make_config(profile, d.env_id, kw);
        DeploymentReport rep;
        {
          py::gil_scoped_release release;
          rep = run_offline(d, cfg);
        }
        return to_py(to_json(rep));
      }, py::arg("dataset"), py::arg("profile") = "desk");

  m.def("env_reset", [](const std::string& env, std::uint64_t seed) {
        return env_reset(make_env_spec(env), seed).state;
      }, py::arg("env"), py::arg("seed"));
  m.def("env_step", [](const std::string& env, const Vector& state, const Vector& action) {
        const auto r = env_step(make_env_spec(env), {state, 0}, action);
        return py::make_tuple(Vector(r.next.state), r.reward, r.terminated);
      }, py::arg("env"), py::arg("state"), py::arg("action"));

  m.def("oracle_optimal_return", [](double gamma, int samples, std::uint64_t seed) {
        return oracle_optimal_return(make_env_spec("pointmass"), gamma, samples, seed);
      }, py::arg("gamma") = 0.99, py::arg("samples") = 1000, py::arg("seed") = 0);

  m.def("gae", &gae_recursion, py::arg("rewards"), py::arg("values"), py::arg("gamma"), py::arg("lam"));
  m.def("gaussian_kl_1d", &gaussian_kl_1d);
  m.def("gaussian_tv_1d", [](double ma, double sa, double mb, double sb) {
        return gaussian_tv_1d_numeric(ma, sa, mb, sb);
      });
  m.def("proposition1_bounds", [](double eps_beta, double eps_phi, double steps, double delta) {
        const auto b = proposition1_bounds(eps_beta, eps_phi, steps, delta);
        return py::make_tuple(b.policy_shift, b.model_error);
      }, py::arg("eps_beta"), py::arg("eps_phi"), py::arg("steps"), py::arg("delta"));
  m.def("return_gap_penalty", &return_gap_penalty, py::arg("eps_m"), py::arg("eps_pi"), py::arg("gamma"),
        py::arg("r_max"));
  m.def("return_gap_bound", &return_gap_bound, py::arg("model_return"), py::arg("eps_m"), py::arg("eps_pi"),
        py::arg("gamma"), py::arg("r_max"));
}
