#include "indrnn/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "indrnn/types.hpp"

namespace indrnn {

namespace {

const char* kPalette[] = {"#1f6feb", "#d1242f", "#1a7f37", "#9a6700",
                          "#8250df", "#bf3989", "#57606a"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

struct Frame {
  double x0, x1, y0, y1;        // data ranges (y already in plot space)
  double px0, px1, py0, py1;    // pixel corners (py0 is the bottom)

  double x(double v) const { return px0 + (v - x0) / (x1 - x0) * (px1 - px0); }
  double y(double v) const { return py0 - (v - y0) / (y1 - y0) * (py0 - py1); }
};

void pad_if_flat(double& lo, double& hi) {
  if (lo == hi) {
    lo -= 0.5;
    hi += 0.5;
  }
}

}  // namespace

std::string render_line_chart(const std::vector<Series>& series, const ChartOptions& opt) {
  if (series.empty()) throw ConfigError("svg: no series to plot");
  for (const auto& s : series) {
    if (s.x.empty()) throw ConfigError("svg: series \"" + s.name + "\" is empty");
    if (s.x.size() != s.y.size()) {
      throw ConfigError("svg: series \"" + s.name + "\" has mismatched x/y sizes");
    }
  }

  // Collect plot-space values, flooring log-axis data at the axis epsilon.
  std::vector<std::vector<double>> ys(series.size());
  std::vector<bool> floored(series.size(), false);
  double xmin = series[0].x[0], xmax = xmin;
  double ymin = 0.0, ymax = 0.0;
  bool first_y = true;
  for (std::size_t i = 0; i < series.size(); ++i) {
    ys[i].reserve(series[i].y.size());
    for (std::size_t k = 0; k < series[i].y.size(); ++k) {
      xmin = std::min(xmin, series[i].x[k]);
      xmax = std::max(xmax, series[i].x[k]);
      double v = series[i].y[k];
      if (opt.log_y) {
        if (v < opt.log_floor) {
          v = opt.log_floor;
          floored[i] = true;
        }
        v = std::log10(v);
      }
      ys[i].push_back(v);
      ymin = first_y ? v : std::min(ymin, v);
      ymax = first_y ? v : std::max(ymax, v);
      first_y = false;
    }
  }
  pad_if_flat(xmin, xmax);
  pad_if_flat(ymin, ymax);

  const double w = opt.width, h = opt.height;
  Frame f{xmin, xmax, ymin, ymax, 70.0, w - 20.0, h - 50.0, 40.0};

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width
      << "\" height=\"" << opt.height << "\" viewBox=\"0 0 " << opt.width << ' '
      << opt.height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!opt.title.empty()) {
    svg << "<text x=\"" << num(w / 2) << "\" y=\"24\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"15\">"
        << escape(opt.title) << "</text>\n";
  }

  // Axes and ticks.
  svg << "<line x1=\"" << num(f.px0) << "\" y1=\"" << num(f.py0) << "\" x2=\""
      << num(f.px1) << "\" y2=\"" << num(f.py0) << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << num(f.px0) << "\" y1=\"" << num(f.py0) << "\" x2=\""
      << num(f.px0) << "\" y2=\"" << num(f.py1) << "\" stroke=\"black\"/>\n";
  const int ticks = 5;
  for (int i = 0; i <= ticks; ++i) {
    const double frac = static_cast<double>(i) / ticks;
    const double xv = xmin + frac * (xmax - xmin);
    const double yv = ymin + frac * (ymax - ymin);
    const double px = f.x(xv), py = f.y(yv);
    svg << "<line x1=\"" << num(px) << "\" y1=\"" << num(f.py0) << "\" x2=\"" << num(px)
        << "\" y2=\"" << num(f.py0 + 5) << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << num(px) << "\" y=\"" << num(f.py0 + 18)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
        << tick_label(xv) << "</text>\n";
    svg << "<line x1=\"" << num(f.px0 - 5) << "\" y1=\"" << num(py) << "\" x2=\""
        << num(f.px0) << "\" y2=\"" << num(py) << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << num(f.px0 - 8) << "\" y=\"" << num(py + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
        << tick_label(opt.log_y ? std::pow(10.0, yv) : yv) << "</text>\n";
  }
  if (!opt.x_label.empty()) {
    svg << "<text x=\"" << num((f.px0 + f.px1) / 2) << "\" y=\"" << num(h - 10)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
        << escape(opt.x_label) << "</text>\n";
  }
  if (!opt.y_label.empty()) {
    svg << "<text x=\"16\" y=\"" << num((f.py0 + f.py1) / 2)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
           "transform=\"rotate(-90 16 "
        << num((f.py0 + f.py1) / 2) << ")\">" << escape(opt.y_label) << "</text>\n";
  }

  // Data.
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kPalette[i % (sizeof kPalette / sizeof kPalette[0])];
    if (series[i].x.size() == 1) {
      svg << "<circle cx=\"" << num(f.x(series[i].x[0])) << "\" cy=\""
          << num(f.y(ys[i][0])) << "\" r=\"3.5\" fill=\"" << color << "\"/>\n";
    } else {
      svg << "<polyline fill=\"none\" stroke=\"" << color
          << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t k = 0; k < series[i].x.size(); ++k) {
        if (k) svg << ' ';
        svg << num(f.x(series[i].x[k])) << ',' << num(f.y(ys[i][k]));
      }
      svg << "\"/>\n";
    }
  }

  // Legend, top right inside the frame.
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kPalette[i % (sizeof kPalette / sizeof kPalette[0])];
    const double ly = f.py1 + 14 + 16 * static_cast<double>(i);
    std::string label = series[i].name;
    if (floored[i]) label += " (floored)";
    svg << "<line x1=\"" << num(f.px1 - 150) << "\" y1=\"" << num(ly) << "\" x2=\""
        << num(f.px1 - 128) << "\" y2=\"" << num(ly) << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << num(f.px1 - 122) << "\" y=\"" << num(ly + 4)
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << escape(label)
        << "</text>\n";
  }

  svg << "</svg>\n";
  return svg.str();
}

void emit_svg_line_chart(const std::string& path, const std::vector<Series>& series,
                         const ChartOptions& opt) {
  const std::string body = render_line_chart(series, opt);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("svg: cannot write \"" + path + "\"");
  out << body;
}

std::string render_histogram_chart(const Histogram& hist, const std::string& title) {
  if (hist.counts.empty()) throw ConfigError("svg: histogram has no bins");
  const int width = 640, height = 400;
  const double px0 = 60, px1 = width - 20, py0 = height - 45, py1 = 40;
  Index peak = 1;
  for (Index c : hist.counts) peak = std::max(peak, c);

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!title.empty()) {
    svg << "<text x=\"" << num(width / 2.0)
        << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"15\">"
        << escape(title) << "</text>\n";
  }
  const auto bins = static_cast<double>(hist.counts.size());
  const double bar_w = (px1 - px0) / bins;
  for (std::size_t i = 0; i < hist.counts.size(); ++i) {
    const double frac = static_cast<double>(hist.counts[i]) / static_cast<double>(peak);
    const double bh = frac * (py0 - py1);
    svg << "<rect x=\"" << num(px0 + bar_w * static_cast<double>(i)) << "\" y=\""
        << num(py0 - bh) << "\" width=\"" << num(bar_w * 0.92) << "\" height=\""
        << num(bh) << "\" fill=\"#1f6feb\"/>\n";
  }
  svg << "<line x1=\"" << num(px0) << "\" y1=\"" << num(py0) << "\" x2=\"" << num(px1)
      << "\" y2=\"" << num(py0) << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << num(px0) << "\" y=\"" << num(py0 + 16)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
      << tick_label(hist.lo) << "</text>\n";
  svg << "<text x=\"" << num(px1) << "\" y=\"" << num(py0 + 16)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
      << tick_label(hist.hi) << "</text>\n";
  svg << "<text x=\"" << num(px0 - 6) << "\" y=\"" << num(py1 + 4)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
      << peak << "</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

void emit_svg_histogram(const std::string& path, const Histogram& hist,
                        const std::string& title) {
  const std::string body = render_histogram_chart(hist, title);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("svg: cannot write \"" + path + "\"");
  out << body;
}

}  // namespace indrnn
