#include "bremen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

namespace bremen {

namespace {

constexpr double kWidth = 800.0;
constexpr double kHeight = 400.0;
constexpr double kMargin = 50.0;

std::string fmt(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << v;
  return os.str();
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

nlohmann::json to_json(const MetricsRow& row) {
  nlohmann::json scalars = nlohmann::json::object();
  for (const auto& [k, v] : row.scalars) scalars[k] = v;
  return {{"run_id", row.run_id},
          {"deployment", row.deployment},
          {"iteration", row.iteration},
          {"wall_clock", row.wall_clock},
          {"scalars", scalars}};
}

MetricsRow metrics_row_from_json(const nlohmann::json& j) {
  MetricsRow row;
  row.run_id = j.at("run_id").get<std::string>();
  row.deployment = j.at("deployment").get<int>();
  row.iteration = j.at("iteration").get<int>();
  row.wall_clock = j.at("wall_clock").get<double>();
  for (const auto& [k, v] : j.at("scalars").items()) {
    row.scalars[k] = v.is_null() ? std::nan("") : v.get<double>();
  }
  return row;
}

MetricsWriter::MetricsWriter(const std::string& path, bool append)
    : path_(path), out_(path, append ? std::ios::app : std::ios::trunc) {
  if (!out_) throw std::runtime_error("cannot open metrics file " + path + " for writing");
}

void MetricsWriter::write(const MetricsRow& row) {
  if (row.deployment < last_deployment_ ||
      (row.deployment == last_deployment_ && row.iteration < last_iteration_)) {
    throw std::logic_error("metrics rows out of order at deployment " + std::to_string(row.deployment) +
                           ", iteration " + std::to_string(row.iteration));
  }
  last_deployment_ = row.deployment;
  last_iteration_ = row.iteration;
  out_ << to_json(row).dump() << '\n';
  if (!out_) throw std::runtime_error("write to metrics file " + path_ + " failed");
  ++rows_;
}

void MetricsWriter::flush() {
  out_.flush();
  if (!out_) throw std::runtime_error("flush of metrics file " + path_ + " failed");
}

std::vector<MetricsRow> read_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open metrics file " + path);
  std::vector<MetricsRow> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      rows.push_back(metrics_row_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad metrics row: " + e.what());
    }
  }
  return rows;
}

std::vector<std::string> scalar_names(const std::vector<MetricsRow>& rows) {
  std::set<std::string> names;
  for (const auto& r : rows) {
    for (const auto& [k, v] : r.scalars) names.insert(k);
  }
  return {names.begin(), names.end()};
}

std::string render_svg(const std::vector<MetricsRow>& rows, const std::string& scalar) {
  std::vector<std::pair<double, double>> pts;
  std::vector<double> ticks;
  int last_dep = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].deployment >= 1 && rows[i].deployment != last_dep) {
      ticks.push_back(static_cast<double>(i));
      last_dep = rows[i].deployment;
    }
    const auto it = rows[i].scalars.find(scalar);
    if (it != rows[i].scalars.end() && std::isfinite(it->second)) {
      pts.emplace_back(static_cast<double>(i), it->second);
    }
  }
  const double x_max = rows.size() > 1 ? static_cast<double>(rows.size() - 1) : 1.0;
  double y_lo = 0.0, y_hi = 1.0;
  if (!pts.empty()) {
    y_lo = y_hi = pts.front().second;
    for (const auto& p : pts) {
      y_lo = std::min(y_lo, p.second);
      y_hi = std::max(y_hi, p.second);
    }
  }
  if (y_hi == y_lo) {
    y_lo -= 1.0;
    y_hi += 1.0;
  }
  const auto sx = [&](double x) { return kMargin + (kWidth - 2 * kMargin) * x / x_max; };
  const auto sy = [&](double y) { return kHeight - kMargin - (kHeight - 2 * kMargin) * (y - y_lo) / (y_hi - y_lo); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kMargin << "\" y=\"25\" font-family=\"sans-serif\" font-size=\"14\">"
      << escape(scalar) << "</text>\n";
  svg << "<line class=\"axis\" x1=\"" << kMargin << "\" y1=\"" << kHeight - kMargin << "\" x2=\""
      << kWidth - kMargin << "\" y2=\"" << kHeight - kMargin << "\" stroke=\"black\"/>\n";
  svg << "<line class=\"axis\" x1=\"" << kMargin << "\" y1=\"" << kMargin << "\" x2=\"" << kMargin
      << "\" y2=\"" << kHeight - kMargin << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"5\" y=\"" << kMargin << "\" font-family=\"sans-serif\" font-size=\"10\">" << fmt(y_hi)
      << "</text>\n";
  svg << "<text x=\"5\" y=\"" << kHeight - kMargin << "\" font-family=\"sans-serif\" font-size=\"10\">"
      << fmt(y_lo) << "</text>\n";
  for (double t : ticks) {
    svg << "<line class=\"deployment-tick\" x1=\"" << fmt(sx(t)) << "\" y1=\"" << kMargin << "\" x2=\""
        << fmt(sx(t)) << "\" y2=\"" << kHeight - kMargin
        << "\" stroke=\"gray\" stroke-dasharray=\"2,3\"/>\n";
  }
  if (!pts.empty()) {
    svg << "<path class=\"series\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" d=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      svg << (i == 0 ? "M" : " L") << fmt(sx(pts[i].first)) << ' ' << fmt(sy(pts[i].second));
    }
    if (pts.size() == 1) svg << " L" << fmt(sx(pts[0].first) + 1.0) << ' ' << fmt(sy(pts[0].second));
    svg << "\"/>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::vector<std::string> write_plots(const std::string& metrics_path, const std::string& out_dir,
                                     const std::vector<std::string>& scalars) {
  const auto rows = read_metrics(metrics_path);
  const auto present = scalar_names(rows);
  for (const auto& name : scalars) {
    if (!std::binary_search(present.begin(), present.end(), name)) {
      throw std::invalid_argument("scalar '" + name + "' does not appear in " + metrics_path);
    }
  }
  const auto names = scalars.empty() ? present : scalars;
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> paths;
  for (const auto& name : names) {
    const auto path = (std::filesystem::path(out_dir) / (name + ".svg")).string();
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write plot " + path);
    out << render_svg(rows, name);
    paths.push_back(path);
  }
  return paths;
}

}  // namespace bremen
