#ifndef UGC_REPORT_HPP
#define UGC_REPORT_HPP

#include <string>
#include <vector>

namespace ugc {

struct ScatterPoint {
  double x = 0.0;
  double y = 0.0;
  std::string label;
};

/// Renders a labeled scatter plot as a standalone SVG file. Throws
/// std::invalid_argument on an empty point list.
void write_scatter_svg(const std::string& path, const std::string& title,
                       const std::string& x_label, const std::string& y_label,
                       const std::vector<ScatterPoint>& points);

/// Reads every evaluation row in <run_dir>/run_index.jsonl and emits the
/// trade-off plots (compute vs. metric, label fraction vs. metric) next to
/// it. Throws std::runtime_error when the directory holds no records.
void generate_report(const std::string& run_dir);

}  // namespace ugc

#endif
