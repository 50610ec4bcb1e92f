// Minimal static line plots (SVG) for the robustness sweep outputs.

#pragma once

#include <string>
#include <vector>

namespace imdp::plot {

struct Series {
    std::string name;
    std::vector<double> ys;
};

/// One polyline per series over shared x values; y axis spans [0,1].
void write_line_plot_svg(const std::string& path, const std::string& title,
                         const std::string& x_label, const std::vector<double>& xs,
                         const std::vector<Series>& series);

}  // namespace imdp::plot
