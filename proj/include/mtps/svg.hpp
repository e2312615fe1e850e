#pragma once

#include <string>
#include <vector>

namespace mtps {

// Minimal deterministic SVG line plots; textual output keeps figures diffable
// in tests and needs no rendering dependency.
struct Series {
    std::string label;
    std::string color;
    std::vector<double> x, y;
};

std::string svg_line_plot(const std::string& title, const std::string& x_label,
                          const std::string& y_label, const std::vector<Series>& series,
                          bool diagonal_reference = false);

}  // namespace mtps
