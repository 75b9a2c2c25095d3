#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "rtrl/csv.hpp"

namespace rtrl {

enum class PlotKind { negative_return, effective_lr, occupancy };

namespace detail {

inline std::string fmt2(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", x);
  return buf;
}

inline std::string fmt_tick(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", x);
  return buf;
}

struct Frame {
  double width = 860, height = 520;
  double left = 75, right = 830, top = 40, bottom = 460;
  double x_min = 0, x_max = 1, y_min = 0, y_max = 1;
  bool log_y = false;

  double x_of(double x) const {
    return left + (x - x_min) / (x_max - x_min) * (right - left);
  }
  double y_of(double y) const {
    const double v = log_y ? std::log10(y) : y;
    const double lo = log_y ? std::log10(y_min) : y_min;
    const double hi = log_y ? std::log10(y_max) : y_max;
    return bottom - (v - lo) / (hi - lo) * (bottom - top);
  }
};

inline void svg_open(std::string& out, double w, double h) {
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt2(w) + "\" height=\"" +
         fmt2(h) + "\" viewBox=\"0 0 " + fmt2(w) + " " + fmt2(h) + "\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

inline void svg_text(std::string& out, double x, double y, const std::string& text,
                     const std::string& anchor = "middle", int size = 13) {
  out += "<text x=\"" + fmt2(x) + "\" y=\"" + fmt2(y) + "\" font-family=\"sans-serif\" font-size=\"" +
         std::to_string(size) + "\" text-anchor=\"" + anchor + "\">" + text + "</text>\n";
}

inline void svg_line(std::string& out, double x1, double y1, double x2, double y2,
                     const std::string& color, double width = 1.0) {
  out += "<line x1=\"" + fmt2(x1) + "\" y1=\"" + fmt2(y1) + "\" x2=\"" + fmt2(x2) + "\" y2=\"" +
         fmt2(y2) + "\" stroke=\"" + color + "\" stroke-width=\"" + fmt2(width) + "\"/>\n";
}

inline void svg_polyline(std::string& out, const std::vector<std::pair<double, double>>& pts,
                         const std::string& color, double width, double opacity) {
  out += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"" + fmt2(width) +
         "\" stroke-opacity=\"" + fmt2(opacity) + "\" points=\"";
  for (const auto& [x, y] : pts) out += fmt2(x) + "," + fmt2(y) + " ";
  out += "\"/>\n";
}

inline std::vector<double> linear_ticks(double lo, double hi, int target = 5) {
  const double span = hi - lo;
  if (span <= 0.0) return {lo};
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (raw <= m * mag) {
      step = m * mag;
      break;
    }
  std::vector<double> ticks;
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-12 * span; t += step)
    ticks.push_back(t);
  return ticks;
}

}  // namespace detail

// Line plot of one metric per gradient iteration: raw series in light strokes
// with a window-100 moving average on top. The y axis is logarithmic when
// every value is positive (the convention for negative expected returns).
inline std::string render_metrics_plot(const std::vector<MetricsRow>& rows, PlotKind kind,
                                       std::size_t window = 100) {
  if (rows.empty()) throw CsvError("plot: no rows");
  Vec y(rows.size());
  std::string title, ylabel;
  if (kind == PlotKind::negative_return) {
    for (std::size_t i = 0; i < rows.size(); ++i) y[i] = -rows[i].mean_return;
    title = "negative expected return";
    ylabel = "-J";
  } else {
    for (std::size_t i = 0; i < rows.size(); ++i) y[i] = rows[i].effective_lr;
    title = "effective learning rate";
    ylabel = "lr_eff";
  }
  Vec smooth(rows.size());
  for (std::size_t i = 0; i < y.size(); ++i) smooth[i] = moving_average_at(y, i, window);

  detail::Frame f;
  f.x_min = static_cast<double>(rows.front().iter);
  f.x_max = static_cast<double>(rows.back().iter);
  if (f.x_max == f.x_min) f.x_max = f.x_min + 1.0;
  const auto [lo_it, hi_it] = std::minmax_element(y.begin(), y.end());
  f.y_min = *lo_it;
  f.y_max = *hi_it;
  f.log_y = f.y_min > 0.0;
  if (f.y_max == f.y_min) {
    f.y_max = f.log_y ? f.y_min * 10.0 : f.y_min + 1.0;
    if (!f.log_y) f.y_min -= 1.0;
  }

  std::string out;
  detail::svg_open(out, f.width, f.height);
  detail::svg_text(out, (f.left + f.right) / 2, 22, title, "middle", 15);

  // axes
  detail::svg_line(out, f.left, f.bottom, f.right, f.bottom, "black", 1.2);
  detail::svg_line(out, f.left, f.bottom, f.left, f.top, "black", 1.2);
  detail::svg_text(out, (f.left + f.right) / 2, f.height - 12, "iteration");
  detail::svg_text(out, 18, (f.top + f.bottom) / 2, ylabel, "middle");

  // ticks
  for (double t : detail::linear_ticks(f.x_min, f.x_max)) {
    const double x = f.x_of(t);
    detail::svg_line(out, x, f.bottom, x, f.bottom + 5, "black");
    detail::svg_text(out, x, f.bottom + 20, detail::fmt_tick(t));
  }
  if (f.log_y) {
    const int lo_dec = static_cast<int>(std::floor(std::log10(f.y_min)));
    const int hi_dec = static_cast<int>(std::ceil(std::log10(f.y_max)));
    for (int d = lo_dec; d <= hi_dec; ++d) {
      const double v = std::pow(10.0, d);
      if (v < f.y_min || v > f.y_max) continue;
      const double yy = f.y_of(v);
      detail::svg_line(out, f.left - 5, yy, f.left, yy, "black");
      detail::svg_text(out, f.left - 9, yy + 4, "1e" + std::to_string(d), "end", 11);
    }
  } else {
    for (double t : detail::linear_ticks(f.y_min, f.y_max)) {
      const double yy = f.y_of(t);
      detail::svg_line(out, f.left - 5, yy, f.left, yy, "black");
      detail::svg_text(out, f.left - 9, yy + 4, detail::fmt_tick(t), "end", 11);
    }
  }

  auto points_of = [&](const Vec& series) {
    std::vector<std::pair<double, double>> pts;
    pts.reserve(series.size());
    for (std::size_t i = 0; i < series.size(); ++i)
      pts.emplace_back(f.x_of(static_cast<double>(rows[i].iter)), f.y_of(series[i]));
    return pts;
  };

  if (rows.size() == 1) {
    const auto pts = points_of(y);
    out += "<circle cx=\"" + detail::fmt2(pts[0].first) + "\" cy=\"" + detail::fmt2(pts[0].second) +
           "\" r=\"4\" fill=\"#1f77b4\"/>\n";
  } else {
    detail::svg_polyline(out, points_of(y), "#9ecae1", 1.0, 0.7);
    detail::svg_polyline(out, points_of(smooth), "#1f77b4", 2.0, 1.0);
  }
  out += "</svg>\n";
  return out;
}

// Heatmap of a normalized occupancy histogram (row indexes the first grid
// axis, rendered left to right; col indexes the second, rendered bottom up).
inline std::string render_occupancy_heatmap(const OccupancyCsv& occ) {
  if (occ.n0 == 0 || occ.n1 == 0) throw CsvError("plot: empty occupancy grid");
  detail::Frame f;
  const double vmax = *std::max_element(occ.normalized.begin(), occ.normalized.end());
  std::string out;
  detail::svg_open(out, f.width, f.height);
  detail::svg_text(out, (f.left + f.right) / 2, 22, "state-space occupancy", "middle", 15);
  const double cw = (f.right - f.left) / static_cast<double>(occ.n0);
  const double ch = (f.bottom - f.top) / static_cast<double>(occ.n1);
  for (std::size_t i = 0; i < occ.n0; ++i) {
    for (std::size_t j = 0; j < occ.n1; ++j) {
      const double v = vmax > 0.0 ? occ.normalized[i * occ.n1 + j] / vmax : 0.0;
      // white -> blue ramp
      const int r = static_cast<int>(std::lround(255.0 - v * (255.0 - 31.0)));
      const int g = static_cast<int>(std::lround(255.0 - v * (255.0 - 119.0)));
      const int b = static_cast<int>(std::lround(255.0 - v * (255.0 - 180.0)));
      char color[8];
      std::snprintf(color, sizeof(color), "#%02x%02x%02x", r, g, b);
      const double x = f.left + static_cast<double>(i) * cw;
      const double y = f.bottom - static_cast<double>(j + 1) * ch;
      out += "<rect x=\"" + detail::fmt2(x) + "\" y=\"" + detail::fmt2(y) + "\" width=\"" +
             detail::fmt2(cw + 0.5) + "\" height=\"" + detail::fmt2(ch + 0.5) + "\" fill=\"" +
             color + "\"/>\n";
    }
  }
  out += "<rect x=\"" + detail::fmt2(f.left) + "\" y=\"" + detail::fmt2(f.top) + "\" width=\"" +
         detail::fmt2(f.right - f.left) + "\" height=\"" + detail::fmt2(f.bottom - f.top) +
         "\" fill=\"none\" stroke=\"black\"/>\n";
  out += "</svg>\n";
  return out;
}

}  // namespace rtrl
