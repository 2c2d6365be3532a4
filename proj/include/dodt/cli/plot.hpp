#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dodt::cli {

class PlotError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using MetricsRow = std::map<std::string, std::optional<double>>;

struct MetricsSeries {
  std::string label;
  std::vector<MetricsRow> rows;
};

// Reads a metrics CSV with a header row. Every data row must have as many
// fields as the header; fields are numbers or empty. Errors name the 1-based
// line number.
MetricsSeries parse_metrics(std::istream& in, const std::string& label);
MetricsSeries load_metrics(const std::string& path);

// The column plotted as return: odt_eval_mean when any row has it, else
// dreamer_return.
std::string return_column(const MetricsSeries& series);

// Two-panel SVG: return against env_steps_total, one polyline with a marker
// per sample, and benefited_count bars per round. One legend entry per series.
std::string render_svg(const std::vector<MetricsSeries>& series);

}  // namespace dodt::cli
