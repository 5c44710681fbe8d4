#pragma once

// Learning-curve plots from metrics JSON-lines files, rendered as SVG.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hymarl/errors.hpp"

namespace hymarl {

struct CurvePoint {
  double step = 0.0;
  double mean_return = 0.0;
  double success_rate = 0.0;
};

struct Curve {
  std::string label;
  std::vector<CurvePoint> points;
};

/// Periodic evaluation records of one metrics file. Final-summary records
/// are skipped. Malformed lines raise ParseError naming file and line.
inline Curve read_curve(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open file");
  Curve c;
  c.label = path;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fail = [&](const std::string& what) { return ParseError(path, static_cast<std::size_t>(lineno), what); };
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw fail(std::string("invalid JSON (") + e.what() + ")");
    }
    if (!j.is_object()) throw fail("expected a JSON object");
    if (j.value("final", false)) continue;
    for (const char* k : {"step", "mean_return", "success_rate"}) {
      if (!j.contains(k) || !j[k].is_number()) throw fail(std::string("missing numeric field '") + k + "'");
    }
    c.points.push_back({j["step"].get<double>(), j["mean_return"].get<double>(), j["success_rate"].get<double>()});
  }
  if (c.points.empty()) throw ParseError(path, static_cast<std::size_t>(std::max(lineno, 1)), "no evaluation records");
  return c;
}

struct PlotSummary {
  int curves = 0;
  double step_min = 0.0, step_max = 0.0;
  double return_min = 0.0, return_max = 0.0;
  double success_min = 0.0, success_max = 0.0;
};

namespace detail {

inline std::string xml_escape(const std::string& s) {
  std::string o;
  for (char ch : s) {
    switch (ch) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      default: o += ch;
    }
  }
  return o;
}

inline std::string num(double v) {
  std::ostringstream s;
  s << std::setprecision(6) << v;
  return s.str();
}

}  // namespace detail

/// Two stacked panels (success rate and mean return against step), one
/// polyline per curve and a shared legend.
inline PlotSummary render_svg(const std::vector<Curve>& curves, std::ostream& out) {
  if (curves.empty()) throw ParseError("<plot>", 0, "nothing to plot");
  PlotSummary s;
  s.curves = static_cast<int>(curves.size());
  constexpr double inf = std::numeric_limits<double>::infinity();
  s.step_min = s.return_min = s.success_min = inf;
  s.step_max = s.return_max = s.success_max = -inf;
  for (const auto& c : curves) {
    for (const auto& p : c.points) {
      s.step_min = std::min(s.step_min, p.step);
      s.step_max = std::max(s.step_max, p.step);
      s.return_min = std::min(s.return_min, p.mean_return);
      s.return_max = std::max(s.return_max, p.mean_return);
      s.success_min = std::min(s.success_min, p.success_rate);
      s.success_max = std::max(s.success_max, p.success_rate);
    }
  }

  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};
  const double W = 720, panel_h = 260, left = 70, right = 20, top = 30, gap = 60;
  const double plot_w = W - left - right;
  const double legend_y = top + 2 * panel_h + gap + 30;
  const double H = legend_y + 20.0 * static_cast<double>(curves.size()) + 10;
  const double x_lo = s.step_min, x_hi = s.step_max > s.step_min ? s.step_max : s.step_min + 1;

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  auto panel = [&](int idx, const std::string& title, double lo, double hi, auto value) {
    if (hi <= lo) {
      lo -= 0.5;
      hi += 0.5;
    }
    const double y0 = top + idx * (panel_h + gap);
    out << "<g>\n<text x=\"" << left << "\" y=\"" << y0 - 8 << "\" font-family=\"sans-serif\" font-size=\"13\">"
        << title << "</text>\n";
    out << "<rect x=\"" << left << "\" y=\"" << y0 << "\" width=\"" << plot_w << "\" height=\"" << panel_h
        << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int t = 0; t <= 4; ++t) {
      const double f = t / 4.0;
      const double yy = y0 + panel_h * (1 - f);
      const double xx = left + plot_w * f;
      out << "<text x=\"" << left - 6 << "\" y=\"" << yy + 4
          << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << detail::num(lo + f * (hi - lo))
          << "</text>\n";
      out << "<text x=\"" << xx << "\" y=\"" << y0 + panel_h + 14
          << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
          << detail::num(x_lo + f * (x_hi - x_lo)) << "</text>\n";
    }
    for (std::size_t c = 0; c < curves.size(); ++c) {
      out << "<polyline class=\"curve\" fill=\"none\" stroke-width=\"1.5\" stroke=\"" << palette[c % 7]
          << "\" points=\"";
      for (const auto& p : curves[c].points) {
        const double px = left + plot_w * (p.step - x_lo) / (x_hi - x_lo);
        const double py = y0 + panel_h * (1 - (value(p) - lo) / (hi - lo));
        out << detail::num(px) << ',' << detail::num(py) << ' ';
      }
      out << "\"/>\n";
    }
    out << "</g>\n";
  };
  panel(0, "success rate", std::min(0.0, s.success_min), std::max(1.0, s.success_max),
        [](const CurvePoint& p) { return p.success_rate; });
  panel(1, "mean return", s.return_min, s.return_max, [](const CurvePoint& p) { return p.mean_return; });

  for (std::size_t c = 0; c < curves.size(); ++c) {
    const double y = legend_y + 20.0 * static_cast<double>(c);
    out << "<line x1=\"" << left << "\" y1=\"" << y << "\" x2=\"" << left + 24 << "\" y2=\"" << y << "\" stroke=\""
        << palette[c % 7] << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << left + 30 << "\" y=\"" << y + 4 << "\" font-family=\"sans-serif\" font-size=\"12\">"
        << detail::xml_escape(curves[c].label) << "</text>\n";
  }
  out << "</svg>\n";
  return s;
}

inline PlotSummary plot_metrics(const std::vector<std::string>& inputs, const std::string& svg_path) {
  std::vector<Curve> curves;
  for (const auto& p : inputs) curves.push_back(read_curve(p));
  std::ofstream out(svg_path, std::ios::trunc);
  if (!out) throw ParseError(svg_path, 0, "cannot write file");
  return render_svg(curves, out);
}

}  // namespace hymarl
