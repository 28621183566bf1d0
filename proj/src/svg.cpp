#include "gptrack/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "gptrack/csv.hpp"
#include "gptrack/errors.hpp"

namespace gptrack::io {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                          "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void include(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void widen() {
    if (!(hi > lo)) {
      lo -= 1.0;
      hi += 1.0;
    } else {
      const double pad = 0.05 * (hi - lo);
      lo -= pad;
      hi += pad;
    }
  }
};

double nice_step(double span, int target_ticks) {
  const double raw = span / std::max(1, target_ticks);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double norm = raw / mag;
  double step;
  if (norm < 1.5) {
    step = 1.0;
  } else if (norm < 3.5) {
    step = 2.0;
  } else if (norm < 7.5) {
    step = 5.0;
  } else {
    step = 10.0;
  }
  return step * mag;
}

std::string tick_label(double v) {
  // short deterministic label; collapse negative zero
  if (v == 0.0) v = 0.0;
  const double rounded = std::round(v * 1e9) / 1e9;
  return format_double(rounded);
}

}  // namespace

std::string render_svg(const std::vector<Panel>& panels, int width, int panel_height) {
  const int margin_left = 70, margin_right = 20, margin_top = 36, margin_bottom = 42;
  const int total_height = panel_height * static_cast<int>(panels.size());

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
         "\" height=\"" + std::to_string(total_height) + "\" font-family=\"sans-serif\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  for (std::size_t p = 0; p < panels.size(); ++p) {
    const Panel& panel = panels[p];
    const int top = static_cast<int>(p) * panel_height;
    const double plot_x0 = margin_left;
    const double plot_y0 = top + margin_top;
    const double plot_w = width - margin_left - margin_right;
    const double plot_h = panel_height - margin_top - margin_bottom;

    Range rx, ry;
    for (const Series& s : panel.series) {
      for (double v : s.x) rx.include(v);
      for (double v : s.y) ry.include(v);
    }
    if (!std::isfinite(rx.lo)) {
      rx.include(0.0);
      ry.include(0.0);
    }
    rx.widen();
    ry.widen();

    auto map_x = [&](double v) {
      return plot_x0 + (v - rx.lo) / (rx.hi - rx.lo) * plot_w;
    };
    auto map_y = [&](double v) {
      return plot_y0 + plot_h - (v - ry.lo) / (ry.hi - ry.lo) * plot_h;
    };

    svg += "<text x=\"" + std::to_string(margin_left) + "\" y=\"" +
           std::to_string(top + 20) + "\" font-size=\"14\" fill=\"#222\">" + panel.title +
           "</text>\n";
    svg += "<rect x=\"" + format_double(plot_x0) + "\" y=\"" + format_double(plot_y0) +
           "\" width=\"" + format_double(plot_w) + "\" height=\"" + format_double(plot_h) +
           "\" fill=\"none\" stroke=\"#888\"/>\n";

    const double x_step = nice_step(rx.hi - rx.lo, 8);
    for (double v = std::ceil(rx.lo / x_step) * x_step; v <= rx.hi + 1e-12 * x_step;
         v += x_step) {
      const double px = map_x(v);
      svg += "<line x1=\"" + format_double(px) + "\" y1=\"" + format_double(plot_y0) +
             "\" x2=\"" + format_double(px) + "\" y2=\"" + format_double(plot_y0 + plot_h) +
             "\" stroke=\"#eee\"/>\n";
      svg += "<text x=\"" + format_double(px) + "\" y=\"" +
             format_double(plot_y0 + plot_h + 16) +
             "\" font-size=\"10\" text-anchor=\"middle\" fill=\"#444\">" + tick_label(v) +
             "</text>\n";
    }
    const double y_step = nice_step(ry.hi - ry.lo, 6);
    for (double v = std::ceil(ry.lo / y_step) * y_step; v <= ry.hi + 1e-12 * y_step;
         v += y_step) {
      const double py = map_y(v);
      svg += "<line x1=\"" + format_double(plot_x0) + "\" y1=\"" + format_double(py) +
             "\" x2=\"" + format_double(plot_x0 + plot_w) + "\" y2=\"" + format_double(py) +
             "\" stroke=\"#eee\"/>\n";
      svg += "<text x=\"" + format_double(plot_x0 - 6) + "\" y=\"" + format_double(py + 3) +
             "\" font-size=\"10\" text-anchor=\"end\" fill=\"#444\">" + tick_label(v) +
             "</text>\n";
    }

    svg += "<text x=\"" + format_double(plot_x0 + plot_w / 2) + "\" y=\"" +
           std::to_string(top + panel_height - 8) +
           "\" font-size=\"11\" text-anchor=\"middle\" fill=\"#222\">" + panel.x_label +
           "</text>\n";
    svg += "<text x=\"16\" y=\"" + format_double(plot_y0 + plot_h / 2) +
           "\" font-size=\"11\" text-anchor=\"middle\" fill=\"#222\" transform=\"rotate(-90 16 " +
           format_double(plot_y0 + plot_h / 2) + ")\">" + panel.y_label + "</text>\n";

    for (std::size_t s = 0; s < panel.series.size(); ++s) {
      const Series& series = panel.series[s];
      const char* color = kPalette[s % (sizeof(kPalette) / sizeof(kPalette[0]))];
      if (series.x.size() >= 2) {
        std::string points;
        for (std::size_t i = 0; i < series.x.size(); ++i) {
          if (!points.empty()) points += ' ';
          points += format_double(map_x(series.x[i]));
          points += ',';
          points += format_double(map_y(series.y[i]));
        }
        svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
               "\" stroke-width=\"1\" points=\"" + points + "\"/>\n";
      }
      const double lx = plot_x0 + plot_w - 150;
      const double ly = plot_y0 + 14 + 14 * static_cast<double>(s);
      svg += "<line x1=\"" + format_double(lx) + "\" y1=\"" + format_double(ly - 4) +
             "\" x2=\"" + format_double(lx + 18) + "\" y2=\"" + format_double(ly - 4) +
             "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
      svg += "<text x=\"" + format_double(lx + 24) + "\" y=\"" + format_double(ly) +
             "\" font-size=\"10\" fill=\"#222\">" + series.label + "</text>\n";
    }
  }
  svg += "</svg>\n";
  return svg;
}

void write_svg(const std::string& path, const std::vector<Panel>& panels, int width,
               int panel_height) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open for writing: " + path);
  out << render_svg(panels, width, panel_height);
}

}  // namespace gptrack::io
