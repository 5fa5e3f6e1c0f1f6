#include "qdspin/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

namespace qdspin {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 420.0;
constexpr double kMargin = 60.0;

std::ofstream open_svg(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" "
        "viewBox=\"0 0 {0} {1}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
        kWidth, kHeight);
    return out;
}

// Blue -> white -> red.
std::string colormap(double u) {
    u = std::clamp(u, 0.0, 1.0);
    int r, g, b;
    if (u < 0.5) {
        const double s = u / 0.5;
        r = static_cast<int>(255 * s);
        g = static_cast<int>(255 * s);
        b = 255;
    } else {
        const double s = (1.0 - u) / 0.5;
        r = 255;
        g = static_cast<int>(255 * s);
        b = static_cast<int>(255 * s);
    }
    return fmt::format("#{:02x}{:02x}{:02x}", r, g, b);
}

}  // namespace

void write_plot_svg(const std::string& path, const std::vector<SvgSeries>& series,
                    const std::string& x_label, const std::string& y_label) {
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const auto& s : series) {
        for (double v : s.x) xmin = std::min(xmin, v), xmax = std::max(xmax, v);
        for (double v : s.y) ymin = std::min(ymin, v), ymax = std::max(ymax, v);
    }
    if (!(xmax > xmin)) xmax = xmin + 1.0;
    if (!(ymax > ymin)) ymax = ymin + 1.0;
    const double pw = kWidth - 2 * kMargin, ph = kHeight - 2 * kMargin;
    auto px = [&](double x) { return kMargin + (x - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double y) { return kHeight - kMargin - (y - ymin) / (ymax - ymin) * ph; };

    auto out = open_svg(path);
    out << fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" "
                       "stroke=\"black\"/>\n",
                       kMargin, kMargin, pw, ph);
    for (const auto& s : series) {
        if (s.markers) {
            for (std::size_t i = 0; i < s.x.size(); ++i)
                out << fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"1.5\" fill=\"{}\"/>\n",
                                   px(s.x[i]), py(s.y[i]), s.color);
        } else {
            out << "<polyline fill=\"none\" stroke=\"" << s.color << "\" points=\"";
            for (std::size_t i = 0; i < s.x.size(); ++i)
                out << fmt::format("{:.2f},{:.2f} ", px(s.x[i]), py(s.y[i]));
            out << "\"/>\n";
        }
    }
    out << fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", kWidth / 2,
                       kHeight - 15, x_label);
    out << fmt::format("<text x=\"15\" y=\"{}\" transform=\"rotate(-90 15 {})\" "
                       "text-anchor=\"middle\">{}</text>\n",
                       kHeight / 2, kHeight / 2, y_label);
    out << fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"10\">{:.4g}</text>\n", kMargin,
                       kHeight - kMargin + 14, xmin);
    out << fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"end\">{:.4g}</text>\n",
                       kWidth - kMargin, kHeight - kMargin + 14, xmax);
    out << fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"end\">{:.4g}</text>\n",
                       kMargin - 4, kHeight - kMargin, ymin);
    out << fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"end\">{:.4g}</text>\n",
                       kMargin - 4, kMargin + 10, ymax);
    out << "</svg>\n";
}

void write_heatmap_svg(const std::string& path, const std::vector<double>& values,
                       std::size_t rows, std::size_t cols, const std::string& x_label,
                       const std::string& y_label, const std::string& title) {
    if (values.size() != rows * cols || rows == 0 || cols == 0)
        throw std::invalid_argument("heat map dimensions do not match the data");
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it, hi = *hi_it > *lo_it ? *hi_it : *lo_it + 1.0;
    const double pw = kWidth - 2 * kMargin, ph = kHeight - 2 * kMargin;
    const double cw = pw / static_cast<double>(cols), ch = ph / static_cast<double>(rows);

    auto out = open_svg(path);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) {
            const double u = (values[i * cols + j] - lo) / (hi - lo);
            out << fmt::format("<rect x=\"{:.3f}\" y=\"{:.3f}\" width=\"{:.3f}\" height=\"{:.3f}\" "
                               "fill=\"{}\"/>\n",
                               kMargin + static_cast<double>(j) * cw,
                               kHeight - kMargin - static_cast<double>(i + 1) * ch, cw + 0.05,
                               ch + 0.05, colormap(u));
        }
    out << fmt::format("<text x=\"{}\" y=\"30\" text-anchor=\"middle\">{} [{:.3g}, {:.3g}]</text>\n",
                       kWidth / 2, title, lo, hi);
    out << fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", kWidth / 2,
                       kHeight - 15, x_label);
    out << fmt::format("<text x=\"15\" y=\"{}\" transform=\"rotate(-90 15 {})\" "
                       "text-anchor=\"middle\">{}</text>\n",
                       kHeight / 2, kHeight / 2, y_label);
    out << "</svg>\n";
}

}  // namespace qdspin
