#include "imdp/svg_plot.hpp"

#include <fstream>

#include "imdp/common.hpp"

namespace imdp::plot {

namespace {
const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
}

void write_line_plot_svg(const std::string& path, const std::string& title,
                         const std::string& x_label, const std::vector<double>& xs,
                         const std::vector<Series>& series) {
    check(!xs.empty() && !series.empty(), "plot needs data");
    for (const Series& s : series)
        check(s.ys.size() == xs.size(), "plot series length mismatch");

    const double width = 480, height = 320;
    const double ml = 50, mr = 16, mt = 32, mb = 44;
    double x_min = xs.front(), x_max = xs.front();
    for (double x : xs) {
        x_min = std::min(x_min, x);
        x_max = std::max(x_max, x);
    }
    if (x_max == x_min) x_max = x_min + 1;
    auto px = [&](double x) { return ml + (x - x_min) / (x_max - x_min) * (width - ml - mr); };
    auto py = [&](double y) { return height - mb - y * (height - mt - mb); };

    std::ofstream out(path);
    check(out.good(), "cannot write plot: " + path);
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
        << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
    out << "<text x='" << width / 2 << "' y='20' text-anchor='middle' font-size='14'>" << title
        << "</text>\n";
    // Axes and y gridlines at 0, 0.25, ..., 1.
    for (int g = 0; g <= 4; ++g) {
        double y = g * 0.25;
        out << "<line x1='" << ml << "' y1='" << py(y) << "' x2='" << width - mr << "' y2='"
            << py(y) << "' stroke='#dddddd'/>\n";
        out << "<text x='" << ml - 6 << "' y='" << py(y) + 4
            << "' text-anchor='end' font-size='10'>" << y << "</text>\n";
    }
    for (double x : xs) {
        out << "<text x='" << px(x) << "' y='" << height - mb + 16
            << "' text-anchor='middle' font-size='10'>" << x << "</text>\n";
    }
    out << "<text x='" << (ml + width - mr) / 2 << "' y='" << height - 8
        << "' text-anchor='middle' font-size='12'>" << x_label << "</text>\n";
    out << "<line x1='" << ml << "' y1='" << py(0) << "' x2='" << width - mr << "' y2='" << py(0)
        << "' stroke='black'/>\n";
    out << "<line x1='" << ml << "' y1='" << py(0) << "' x2='" << ml << "' y2='" << py(1)
        << "' stroke='black'/>\n";

    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = kColors[s % 5];
        out << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
        for (std::size_t i = 0; i < xs.size(); ++i)
            out << px(xs[i]) << "," << py(std::min(1.0, std::max(0.0, series[s].ys[i]))) << " ";
        out << "'/>\n";
        out << "<text x='" << width - mr - 4 << "' y='" << mt + 14 * static_cast<double>(s)
            << "' text-anchor='end' font-size='11' fill='" << color << "'>" << series[s].name
            << "</text>\n";
    }
    out << "</svg>\n";
}

}  // namespace imdp::plot
