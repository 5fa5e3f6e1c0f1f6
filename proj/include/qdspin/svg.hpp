#pragma once

#include <string>
#include <vector>

namespace qdspin {

struct SvgSeries {
    std::vector<double> x;
    std::vector<double> y;
    std::string color = "#1f77b4";
    bool markers = false;  ///< dots instead of a polyline
};

/// Minimal line/scatter plot with axis labels and min/max tick values.
void write_plot_svg(const std::string& path, const std::vector<SvgSeries>& series,
                    const std::string& x_label, const std::string& y_label);

/// Row-major grid of values drawn as coloured rects (rows along y).
void write_heatmap_svg(const std::string& path, const std::vector<double>& values,
                       std::size_t rows, std::size_t cols, const std::string& x_label,
                       const std::string& y_label, const std::string& title);

}  // namespace qdspin
