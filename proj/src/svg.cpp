#include "mtps/svg.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace mtps {

namespace {

constexpr int kWidth = 560;
constexpr int kHeight = 420;
constexpr int kMargin = 56;

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

}  // namespace

std::string svg_line_plot(const std::string& title, const std::string& x_label,
                          const std::string& y_label, const std::vector<Series>& series,
                          bool diagonal_reference) {
    double x_min = 0.0, x_max = 1.0, y_min = 0.0, y_max = 1.0;
    for (const auto& s : series) {
        for (double v : s.x) {
            x_min = std::min(x_min, v);
            x_max = std::max(x_max, v);
        }
        for (double v : s.y) {
            y_min = std::min(y_min, v);
            y_max = std::max(y_max, v);
        }
    }
    const double x_span = x_max - x_min > 0 ? x_max - x_min : 1.0;
    const double y_span = y_max - y_min > 0 ? y_max - y_min : 1.0;
    auto px = [&](double x) {
        return kMargin + (x - x_min) / x_span * (kWidth - 2 * kMargin);
    };
    auto py = [&](double y) {
        return kHeight - kMargin - (y - y_min) / y_span * (kHeight - 2 * kMargin);
    };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
       << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
       << title << "</text>\n";
    // axes
    os << "<line x1=\"" << kMargin << "\" y1=\"" << kHeight - kMargin << "\" x2=\""
       << kWidth - kMargin << "\" y2=\"" << kHeight - kMargin
       << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    os << "<line x1=\"" << kMargin << "\" y1=\"" << kMargin << "\" x2=\"" << kMargin << "\" y2=\""
       << kHeight - kMargin << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    os << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 12
       << "\" text-anchor=\"middle\" font-size=\"12\">" << x_label << "</text>\n";
    os << "<text x=\"16\" y=\"" << kHeight / 2 << "\" text-anchor=\"middle\" font-size=\"12\" "
       << "transform=\"rotate(-90 16 " << kHeight / 2 << ")\">" << y_label << "</text>\n";
    for (int i = 0; i <= 5; ++i) {
        const double fx = x_min + x_span * i / 5.0;
        const double fy = y_min + y_span * i / 5.0;
        os << "<text x=\"" << num(px(fx)) << "\" y=\"" << kHeight - kMargin + 16
           << "\" text-anchor=\"middle\" font-size=\"10\">" << num(fx) << "</text>\n";
        os << "<text x=\"" << kMargin - 6 << "\" y=\"" << num(py(fy) + 3)
           << "\" text-anchor=\"end\" font-size=\"10\">" << num(fy) << "</text>\n";
    }
    if (diagonal_reference) {
        os << "<line x1=\"" << num(px(x_min)) << "\" y1=\"" << num(py(x_min)) << "\" x2=\""
           << num(px(x_max)) << "\" y2=\"" << num(py(x_max))
           << "\" stroke=\"gray\" stroke-dasharray=\"4 3\" stroke-width=\"1\"/>\n";
    }
    int legend_y = kMargin;
    for (const auto& s : series) {
        os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
        for (size_t i = 0; i < s.x.size(); ++i) {
            if (i) os << ' ';
            os << num(px(s.x[i])) << ',' << num(py(s.y[i]));
        }
        os << "\"/>\n";
        os << "<line x1=\"" << kWidth - kMargin - 120 << "\" y1=\"" << legend_y << "\" x2=\""
           << kWidth - kMargin - 100 << "\" y2=\"" << legend_y << "\" stroke=\"" << s.color
           << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << kWidth - kMargin - 94 << "\" y=\"" << legend_y + 4
           << "\" font-size=\"11\">" << s.label << "</text>\n";
        legend_y += 16;
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace mtps
