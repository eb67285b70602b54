#include "ugc/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace fs = std::filesystem;

namespace ugc {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

void write_scatter_svg(const std::string& path, const std::string& title,
                       const std::string& x_label, const std::string& y_label,
                       const std::vector<ScatterPoint>& points) {
  if (points.empty()) throw std::invalid_argument("write_scatter_svg: no points to plot");

  constexpr double kWidth = 640, kHeight = 480, kMargin = 70;
  double x_min = points[0].x, x_max = points[0].x, y_min = points[0].y, y_max = points[0].y;
  for (const ScatterPoint& p : points) {
    x_min = std::min(x_min, p.x);
    x_max = std::max(x_max, p.x);
    y_min = std::min(y_min, p.y);
    y_max = std::max(y_max, p.y);
  }
  // Pad degenerate or flat ranges so every point stays visible.
  double x_pad = (x_max - x_min) * 0.08 + (x_max == x_min ? std::max(1.0, std::abs(x_min)) * 0.1 : 0);
  double y_pad = (y_max - y_min) * 0.08 + (y_max == y_min ? std::max(1.0, std::abs(y_min)) * 0.1 : 0);
  x_min -= x_pad;
  x_max += x_pad;
  y_min -= y_pad;
  y_max += y_pad;

  auto sx = [&](double x) {
    return kMargin + (x - x_min) / (x_max - x_min) * (kWidth - 2 * kMargin);
  };
  auto sy = [&](double y) {
    return kHeight - kMargin - (y - y_min) / (y_max - y_min) * (kHeight - 2 * kMargin);
  };

  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write plot file: " + path);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kWidth / 2 << "\" y=\"28\" text-anchor=\"middle\" font-size=\"16\">"
     << escape_xml(title) << "</text>\n";

  // Axes with end-value ticks.
  os << "<line x1=\"" << kMargin << "\" y1=\"" << kHeight - kMargin << "\" x2=\"" << kWidth - kMargin
     << "\" y2=\"" << kHeight - kMargin << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << kMargin << "\" y1=\"" << kMargin << "\" x2=\"" << kMargin << "\" y2=\""
     << kHeight - kMargin << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 20
     << "\" text-anchor=\"middle\">" << escape_xml(x_label) << "</text>\n";
  os << "<text x=\"20\" y=\"" << kHeight / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 20 "
     << kHeight / 2 << ")\">" << escape_xml(y_label) << "</text>\n";
  for (double t : {0.0, 0.5, 1.0}) {
    double xv = x_min + t * (x_max - x_min), yv = y_min + t * (y_max - y_min);
    os << "<text x=\"" << sx(xv) << "\" y=\"" << kHeight - kMargin + 18
       << "\" text-anchor=\"middle\">" << fmt(xv) << "</text>\n";
    os << "<text x=\"" << kMargin - 8 << "\" y=\"" << sy(yv) + 4 << "\" text-anchor=\"end\">"
       << fmt(yv) << "</text>\n";
  }

  for (const ScatterPoint& p : points) {
    os << "<circle cx=\"" << sx(p.x) << "\" cy=\"" << sy(p.y)
       << "\" r=\"4\" fill=\"steelblue\"/>\n";
    if (!p.label.empty())
      os << "<text x=\"" << sx(p.x) + 7 << "\" y=\"" << sy(p.y) - 6 << "\">" << escape_xml(p.label)
         << "</text>\n";
  }
  os << "</svg>\n";
}

void generate_report(const std::string& run_dir) {
  const std::string index_path = (fs::path(run_dir) / "run_index.jsonl").string();
  std::ifstream is(index_path);
  std::vector<nlohmann::json> rows;
  if (is)
    for (std::string line; std::getline(is, line);)
      if (!line.empty()) rows.push_back(nlohmann::json::parse(line));
  if (rows.empty())
    throw std::runtime_error("no evaluation records found in " + index_path +
                             "; run eval before report");

  std::vector<ScatterPoint> macs_l1, macs_fid, fraction_l1;
  for (const nlohmann::json& row : rows) {
    std::string label = row.value("name", "");
    double macs_m = row.at("macs").get<double>() / 1e6;
    double l1 = row.at("l1").get<double>();
    macs_l1.push_back({macs_m, l1, label});
    if (row.contains("fid") && !row.at("fid").is_null())
      macs_fid.push_back({macs_m, row.at("fid").get<double>(), label});
    if (row.contains("label_fraction") && !row.at("label_fraction").is_null())
      fraction_l1.push_back({row.at("label_fraction").get<double>(), l1, label});
  }

  write_scatter_svg((fs::path(run_dir) / "macs_vs_l1.svg").string(), "Compute vs. L1 error",
                    "MACs (millions)", "held-out L1", macs_l1);
  if (!macs_fid.empty())
    write_scatter_svg((fs::path(run_dir) / "macs_vs_fid.svg").string(), "Compute vs. proxy-FID",
                      "MACs (millions)", "proxy-FID", macs_fid);
  if (!fraction_l1.empty())
    write_scatter_svg((fs::path(run_dir) / "fraction_vs_l1.svg").string(),
                      "Label fraction vs. L1 error", "labeled fraction", "held-out L1", fraction_l1);
}

}  // namespace ugc
