#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "bremen/config.hpp"
#include "bremen/metrics.hpp"

using namespace bremen;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("bremen_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

MetricsRow row(int dep, int it, std::map<std::string, double> s) {
  return {"run", dep, it, 0.0, std::move(s)};
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("empty text gives the desk defaults") {
  const auto c = parse_config_text("", desk_profile());
  const ExperimentConfig d;
  CHECK(c.deployments == 5);
  CHECK(c.samples_per_deployment == 2000);
  CHECK(c.iterations == 200);
  CHECK(c.policy_batch == 5000);
  CHECK(c.rollout_length == 50);
  CHECK(c.delta == 0.05);
  CHECK(c.ensemble_size == 5);
  CHECK(to_json(c) == to_json(d));
}

TEST_CASE("negative delta names the key") {
  try {
    (void)parse_config_text("[policy]\ndelta = -1\n", desk_profile());
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("delta") != std::string::npos);
  }
}

TEST_CASE("sections, comments, root keys and errors") {
  const auto c = parse_config_text(
      "# comment\nseed = 9\n[env]\nenv = pendulum\n; other\n[experiment]\ndeployments = 3\nmode = metrpo_offline\n"
      "[dynamics]\ndynamics_hidden = 32,16\n",
      desk_profile());
  CHECK(c.seed == 9);
  CHECK(c.env == "pendulum");
  CHECK(c.deployments == 3);
  CHECK(c.mode == Mode::MetrpoOffline);
  CHECK(c.dynamics_hidden == std::vector<std::size_t>{32, 16});
  CHECK_THROWS_AS(parse_config_text("[policy]\nunknown_key = 1\n", desk_profile()), ConfigError);
  CHECK_THROWS_AS(parse_config_text("[bogus]\ndelta = 1\n", desk_profile()), ConfigError);
  CHECK_THROWS_AS(parse_config_text("[dynamics]\ndelta = 0.1\n", desk_profile()), ConfigError);
  CHECK_THROWS_AS(parse_config_text("[policy]\ndelta = abc\n", desk_profile()), ConfigError);
  CHECK_THROWS_AS(parse_config_text("[env]\nenv = cartpole\n", desk_profile()), ConfigError);
  CHECK_THROWS_AS(parse_config_file("/nonexistent/bremen.ini", desk_profile()), ConfigError);
}

TEST_CASE("paper profile for gatewalker") {
  const auto c = profile_config("paper", "gatewalker");
  CHECK(c.delta == 0.05);
  CHECK(c.lambda == 0.95);
  CHECK(c.iterations == 2000);
  CHECK(c.env == "gatewalker");
  CHECK_THROWS_AS(profile_config("huge", "pointmass"), ConfigError);
}

TEST_CASE("mode names round trip") {
  for (auto m : {Mode::Bremen, Mode::MetrpoOffline, Mode::ExplicitKl}) CHECK(parse_mode(to_string(m)) == m);
  CHECK_THROWS_AS(parse_mode("dqn"), ConfigError);
}

}

TEST_SUITE("metrics") {

TEST_CASE("rows round trip through jsonl") {
  const auto dir = temp_dir("metrics_rt");
  const auto path = dir + "/m.jsonl";
  std::vector<MetricsRow> rows{row(0, 0, {{"return", -3.5}}), row(1, 0, {{"bc_loss", 0.1}, {"kl", 1e-17}}),
                               row(1, 1, {{"return", 1.0 / 3.0}})};
  {
    MetricsWriter w(path);
    for (const auto& r : rows) w.write(r);
    w.flush();
  }
  CHECK(read_metrics(path) == rows);
  CHECK(metrics_row_from_json(to_json(rows[1])) == rows[1]);
  MetricsWriter w(path, true);
  w.write(row(2, 3, {}));
  CHECK_THROWS(w.write(row(2, 2, {})));
  CHECK_THROWS(w.write(row(1, 9, {})));
}

TEST_CASE("constant scalar draws a horizontal path") {
  std::vector<MetricsRow> rows;
  for (int i = 0; i < 5; ++i) rows.push_back(row(0, i, {{"c", 2.0}}));
  const auto svg = render_svg(rows, "c");
  std::smatch m;
  const std::regex series(R"re(class="series"[^>]* d="([^"]+)")re");
  REQUIRE(std::regex_search(svg, m, series));
  const std::string d = m[1];
  const std::regex point(R"([ML]([-0-9.e]+) ([-0-9.e]+))");
  std::set<std::string> ys;
  int segments = -1;
  for (auto it = std::sregex_iterator(d.begin(), d.end(), point); it != std::sregex_iterator(); ++it) {
    ys.insert((*it)[2]);
    ++segments;
  }
  CHECK(ys.size() == 1);
  CHECK(segments == 4);
}

TEST_CASE("one tick per deployment") {
  std::vector<MetricsRow> rows{row(0, 0, {{"return", -200.0}})};
  for (int dep = 1; dep <= 5; ++dep) {
    rows.push_back(row(dep, 0, {{"bc_loss", 0.1}}));
    for (int it = 1; it <= 3; ++it) rows.push_back(row(dep, it, {{"mean_kl", 0.01}}));
    rows.push_back(row(dep, 4, {{"return", -100.0 / dep}}));
  }
  const auto svg = render_svg(rows, "return");
  CHECK(count(svg, "class=\"deployment-tick\"") == 5);
  CHECK(count(svg, "stroke-dasharray") >= 5);
}

TEST_CASE("plots are written per scalar and are reproducible") {
  const auto dir = temp_dir("plots");
  const auto path = dir + "/m.jsonl";
  {
    MetricsWriter w(path);
    w.write(row(0, 0, {{"return", -1.0}, {"samples", 0.0}}));
    w.write(row(1, 0, {{"return", -0.5}, {"samples", 10.0}}));
  }
  const auto files = write_plots(path, dir + "/plots");
  CHECK(files.size() == 2);
  for (const auto& f : files) CHECK(fs::exists(f));
  const auto again = write_plots(path, dir + "/plots2", {"return"});
  REQUIRE(again.size() == 1);
  auto slurp = [](const std::string& p) {
    std::ifstream in(p);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  CHECK(slurp(again[0]) == slurp(dir + "/plots/return.svg"));
  CHECK_THROWS(write_plots(path, dir + "/plots3", {"missing"}));
}

}
