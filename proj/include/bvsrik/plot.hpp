#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "bvsrik/tensor.hpp"

namespace bvsrik {

struct PlotSeries {
  std::vector<Real> values;
  std::array<Real, 3> color{0.1, 0.3, 0.8};
};

/// Line chart with markers over a shared x index, light grid, no text.
/// The y range spans all series with a small margin.
Tensor render_line_plot(const std::vector<PlotSeries>& series, int width = 640, int height = 360);
void write_line_plot(const std::vector<PlotSeries>& series, const std::filesystem::path& file);

}  // namespace bvsrik
