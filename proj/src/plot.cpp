#include "bvsrik/plot.hpp"

#include <algorithm>
#include <cmath>

#include "bvsrik/degradation.hpp"
#include "bvsrik/error.hpp"

namespace bvsrik {

namespace {

void put(Tensor& img, int y, int x, const std::array<Real, 3>& color) {
  if (y < 0 || x < 0 || y >= img.dim(1) || x >= img.dim(2)) return;
  for (int c = 0; c < 3; ++c) img.at(c, y, x) = color[c];
}

void line(Tensor& img, Real y0, Real x0, Real y1, Real x1, const std::array<Real, 3>& color) {
  const int n = static_cast<int>(std::ceil(std::max(std::abs(y1 - y0), std::abs(x1 - x0)))) + 1;
  for (int k = 0; k <= n; ++k) {
    const Real u = static_cast<Real>(k) / n;
    const int y = static_cast<int>(std::lround(y0 + u * (y1 - y0)));
    const int x = static_cast<int>(std::lround(x0 + u * (x1 - x0)));
    put(img, y, x, color);
    put(img, y + 1, x, color);
  }
}

}  // namespace

Tensor render_line_plot(const std::vector<PlotSeries>& series, int width, int height) {
  if (width < 32 || height < 32) throw ValidationError("plot: canvas too small");
  Tensor img({3, height, width}, 1.0);
  const int left = 24, right = width - 12, top = 12, bottom = height - 24;

  Real lo = INFINITY, hi = -INFINITY;
  std::size_t count = 0;
  for (const PlotSeries& s : series) {
    for (Real v : s.values) {
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    count = std::max(count, s.values.size());
  }
  if (!(lo <= hi)) lo = 0, hi = 1;
  if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
  const Real margin = 0.05 * (hi - lo);
  lo -= margin;
  hi += margin;

  const std::array<Real, 3> grid{0.9, 0.9, 0.9}, axis{0.2, 0.2, 0.2};
  for (int g = 0; g <= 4; ++g) {
    const Real y = bottom - g * (bottom - top) / 4.0;
    line(img, y, left, y, right, grid);
  }
  line(img, bottom, left, bottom, right, axis);
  line(img, top, left, bottom, left, axis);

  auto px = [&](std::size_t i) {
    return count <= 1 ? 0.5 * (left + right) : left + (right - left) * static_cast<Real>(i) / (count - 1);
  };
  auto py = [&](Real v) { return bottom - (bottom - top) * (v - lo) / (hi - lo); };
  for (const PlotSeries& s : series) {
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      if (!std::isfinite(s.values[i])) continue;
      const Real x = px(i), y = py(s.values[i]);
      if (i > 0 && std::isfinite(s.values[i - 1])) line(img, py(s.values[i - 1]), px(i - 1), y, x, s.color);
      for (int a = -2; a <= 2; ++a)
        for (int b = -2; b <= 2; ++b) put(img, static_cast<int>(std::lround(y)) + a, static_cast<int>(std::lround(x)) + b, s.color);
    }
  }
  return img;
}

void write_line_plot(const std::vector<PlotSeries>& series, const std::filesystem::path& file) {
  save_png(render_line_plot(series), file);
}

}  // namespace bvsrik
