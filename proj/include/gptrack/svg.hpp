#pragma once

#include <string>
#include <vector>

namespace gptrack::io {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct Panel {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

/// Renders stacked line-plot panels as a standalone SVG document. Output
/// is a pure function of the inputs (fixed palette, deterministic number
/// formatting), so identical data gives identical bytes.
std::string render_svg(const std::vector<Panel>& panels, int width = 960,
                       int panel_height = 280);

void write_svg(const std::string& path, const std::vector<Panel>& panels,
               int width = 960, int panel_height = 280);

}  // namespace gptrack::io
