#pragma once

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace bremen {

struct MetricsRow {
  std::string run_id;
  int deployment = 0;
  int iteration = 0;
  double wall_clock = 0.0;  // seconds since run start; 0 unless recording is enabled
  std::map<std::string, double> scalars;

  bool operator==(const MetricsRow&) const = default;
};

nlohmann::json to_json(const MetricsRow& row);
MetricsRow metrics_row_from_json(const nlohmann::json& j);

/// Append-only JSONL writer. Rows must arrive in non-decreasing (deployment, iteration)
/// order; flush() is called by the loops after every deployment.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path, bool append = false);
  void write(const MetricsRow& row);
  void flush();
  std::size_t rows_written() const { return rows_; }

 private:
  std::string path_;
  std::ofstream out_;
  std::size_t rows_ = 0;
  int last_deployment_ = -1;
  int last_iteration_ = -1;
};

std::vector<MetricsRow> read_metrics(const std::string& path);

/// Line chart of one scalar against row order, with a dotted vertical tick at the first
/// row of every deployment >= 1.
std::string render_svg(const std::vector<MetricsRow>& rows, const std::string& scalar);

/// Every scalar name present in the rows, sorted.
std::vector<std::string> scalar_names(const std::vector<MetricsRow>& rows);

/// Writes <out_dir>/<scalar>.svg for each requested scalar (all when empty). Returns paths.
std::vector<std::string> write_plots(const std::string& metrics_path, const std::string& out_dir,
                                     const std::vector<std::string>& scalars = {});

}  // namespace bremen
