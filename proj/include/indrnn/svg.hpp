#pragma once

#include <string>
#include <vector>

#include "indrnn/diagnostics.hpp"

namespace indrnn {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct ChartOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_y = false;
  double log_floor = 1e-12;  // log-axis values below this are floored + flagged
  int width = 760;
  int height = 460;
};

// Self-contained SVG: one polyline per series (a lone point becomes a
// marker), axes with ticks, legend naming each series. Series floored on a
// log axis get a "(floored)" tag in the legend. Empty input throws
// ConfigError.
std::string render_line_chart(const std::vector<Series>& series,
                              const ChartOptions& opt = {});

void emit_svg_line_chart(const std::string& path, const std::vector<Series>& series,
                         const ChartOptions& opt = {});

std::string render_histogram_chart(const Histogram& hist, const std::string& title);

void emit_svg_histogram(const std::string& path, const Histogram& hist,
                        const std::string& title);

}  // namespace indrnn
