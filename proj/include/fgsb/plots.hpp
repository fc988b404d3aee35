#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "fgsb/image.hpp"

namespace fgsb::plots {

struct Series {
    std::string name;
    std::vector<std::pair<double, double>> points;
};

/// Line chart, one polyline per series, written as a standalone SVG.
void write_line_chart(const std::filesystem::path& path, const std::string& title, const std::string& x_label,
                      const std::vector<Series>& series);

struct Bar {
    std::string label;
    double value = 0.0;
    double error = 0.0;  ///< half-height of the error whisker; 0 draws none
};

void write_bar_chart(const std::filesystem::path& path, const std::string& title, const std::string& y_label,
                     const std::vector<Bar>& bars);

/// Tiles equally sized [-1, 1] images into rows separated by a 2-pixel border and writes
/// an 8-bit PNG.
void write_image_grid(const std::filesystem::path& path, const std::vector<std::vector<Image>>& rows);

}  // namespace fgsb::plots
