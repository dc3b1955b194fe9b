#pragma once

#include <string>
#include <vector>

namespace stsm::svgplot {

struct Series {
    std::string label;
    std::vector<double> y;  // x is the index
};

// Minimal multi-series line chart with axes, ticks and a legend.
void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series);

}  // namespace stsm::svgplot
