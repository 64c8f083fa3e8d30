#pragma once

// Density-matrix bar charts (SVG and plain text) and a small line plot for
// precision curves.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "polarimeter/quantum.hpp"

namespace polarimeter::chart {

inline const char* kBasisLabels[4] = {"HH", "HV", "VH", "VV"};

namespace detail {

inline std::string fmt(double v, const char* spec = "%.3f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace detail

/// Two 4x4 grids (Re, Im). Each cell prints the value and a bar of up to
/// `width` characters, scaled so |x| = 1 fills it; '#' positive, '=' negative.
inline std::string ascii_density(const Matrix4c& rho, int width = 10) {
  std::ostringstream out;
  for (int part = 0; part < 2; ++part) {
    out << (part == 0 ? "Re(rho)" : "Im(rho)") << '\n';
    out << "      ";
    for (const char* c : kBasisLabels) out << std::string(1, ' ') << c << std::string(static_cast<std::size_t>(width + 5), ' ');
    out << '\n';
    for (int r = 0; r < 4; ++r) {
      out << "  " << kBasisLabels[r] << "  ";
      for (int c = 0; c < 4; ++c) {
        const double v = part == 0 ? rho(r, c).real() : rho(r, c).imag();
        const int n = std::clamp(static_cast<int>(std::lround(std::abs(v) * width)), 0, width);
        out << detail::fmt(v, "%+.3f") << ' ' << std::string(static_cast<std::size_t>(n), v >= 0 ? '#' : '=')
            << std::string(static_cast<std::size_t>(width - n), ' ') << ' ';
      }
      out << '\n';
    }
    if (part == 0) out << '\n';
  }
  return out.str();
}

/// Side-by-side bar grids of Re(rho) and Im(rho). The vertical scale spans
/// [-zmax, zmax] with zmax = max(0.5, largest |entry|).
inline std::string svg_density(const Matrix4c& rho, const std::string& title = "") {
  double zmax = 0.5;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) zmax = std::max({zmax, std::abs(rho(r, c).real()), std::abs(rho(r, c).imag())});

  const double panel_w = 360, panel_h = 260, margin = 40, top = title.empty() ? 30 : 55;
  const double width = 2 * panel_w + 3 * margin, height = panel_h + top + 60;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!title.empty())
    s << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << detail::escape(title)
      << "</text>\n";

  for (int part = 0; part < 2; ++part) {
    const double x0 = margin + part * (panel_w + margin);
    const double y_mid = top + panel_h / 2;
    const double scale = (panel_h / 2 - 10) / zmax;
    s << "<g>\n";
    s << "<text x=\"" << x0 + panel_w / 2 << "\" y=\"" << top - 8 << "\" text-anchor=\"middle\" font-size=\"13\">"
      << (part == 0 ? "Re(&#961;)" : "Im(&#961;)") << "</text>\n";
    s << "<rect x=\"" << x0 << "\" y=\"" << top << "\" width=\"" << panel_w << "\" height=\"" << panel_h
      << "\" fill=\"none\" stroke=\"#999\"/>\n";
    for (double tick : {-zmax, -zmax / 2, 0.0, zmax / 2, zmax}) {
      const double y = y_mid - tick * scale;
      s << "<line x1=\"" << x0 << "\" x2=\"" << x0 + panel_w << "\" y1=\"" << y << "\" y2=\"" << y
        << "\" stroke=\"" << (tick == 0.0 ? "#444" : "#ddd") << "\"/>\n";
      s << "<text x=\"" << x0 - 4 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << detail::fmt(tick, "%.2f")
        << "</text>\n";
    }
    const double group_w = panel_w / 4;
    const double bar_w = group_w / 5;
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) {
        const double v = part == 0 ? rho(r, c).real() : rho(r, c).imag();
        const double x = x0 + r * group_w + (c + 0.5) * bar_w;
        const double h = std::abs(v) * scale;
        const double y = v >= 0 ? y_mid - h : y_mid;
        s << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << bar_w * 0.9 << "\" height=\"" << h
          << "\" fill=\"" << (v >= 0 ? "#3b6ea8" : "#c0504d") << "\"><title>" << kBasisLabels[r] << ','
          << kBasisLabels[c] << ": " << detail::fmt(v, "%+.4f") << "</title></rect>\n";
      }
      s << "<text x=\"" << x0 + (r + 0.5) * group_w << "\" y=\"" << top + panel_h + 16
        << "\" text-anchor=\"middle\">" << kBasisLabels[r] << "</text>\n";
    }
    s << "<text x=\"" << x0 + panel_w / 2 << "\" y=\"" << top + panel_h + 34
      << "\" text-anchor=\"middle\" fill=\"#666\">row; bars within a group are columns HH HV VH VV</text>\n";
    s << "</g>\n";
  }
  s << "</svg>\n";
  return s.str();
}

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> err;  ///< optional, same length as y
};

/// Line plot with optional error bars; x on a log axis when log_x is set.
inline std::string svg_lines(const std::vector<Series>& series, const std::string& x_label, const std::string& y_label,
                             bool log_x, const std::string& title = "") {
  const double W = 640, H = 420, left = 70, right = 150, top = 40, bottom = 50;
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const auto& s : series)
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      const double x = log_x ? std::log10(s.x[k]) : s.x[k];
      const double e = k < s.err.size() ? s.err[k] : 0.0;
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, s.y[k] - e);
      ymax = std::max(ymax, s.y[k] + e);
    }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1e-3;
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;
  auto px = [&](double x) { return left + ((log_x ? std::log10(x) : x) - xmin) / (xmax - xmin) * (W - left - right); };
  auto py = [&](double y) { return top + (ymax - y) / (ymax - ymin) * (H - top - bottom); };

  static const char* colors[] = {"#3b6ea8", "#c0504d", "#9bbb59", "#8064a2", "#f79646", "#4bacc6"};
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!title.empty())
    s << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << detail::escape(title)
      << "</text>\n";
  s << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << W - left - right << "\" height=\""
    << H - top - bottom << "\" fill=\"none\" stroke=\"#999\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double y = ymin + k * (ymax - ymin) / 4;
    s << "<text x=\"" << left - 6 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\">" << detail::fmt(y, "%.4f")
      << "</text>\n";
    const double xv = xmin + k * (xmax - xmin) / 4;
    const double xl = log_x ? std::pow(10.0, xv) : xv;
    s << "<text x=\"" << left + k * (W - left - right) / 4 << "\" y=\"" << H - bottom + 16
      << "\" text-anchor=\"middle\">" << detail::fmt(xl, "%.3g") << "</text>\n";
  }
  s << "<text x=\"" << (left + W - right) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">"
    << detail::escape(x_label) << "</text>\n";
  s << "<text x=\"16\" y=\"" << (top + H - bottom) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << (top + H - bottom) / 2 << ")\">" << detail::escape(y_label) << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& sr = series[i];
    const char* color = colors[i % 6];
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < sr.x.size(); ++k) s << px(sr.x[k]) << ',' << py(sr.y[k]) << ' ';
    s << "\"/>\n";
    for (std::size_t k = 0; k < sr.x.size(); ++k) {
      s << "<circle cx=\"" << px(sr.x[k]) << "\" cy=\"" << py(sr.y[k]) << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
      if (k < sr.err.size() && sr.err[k] > 0)
        s << "<line x1=\"" << px(sr.x[k]) << "\" x2=\"" << px(sr.x[k]) << "\" y1=\"" << py(sr.y[k] - sr.err[k])
          << "\" y2=\"" << py(sr.y[k] + sr.err[k]) << "\" stroke=\"" << color << "\"/>\n";
    }
    s << "<text x=\"" << W - right + 10 << "\" y=\"" << top + 16 * (i + 1) << "\" fill=\"" << color << "\">"
      << detail::escape(sr.name) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace polarimeter::chart
