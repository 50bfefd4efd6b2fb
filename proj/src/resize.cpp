#include "bvsrik/resize.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>

#include "bvsrik/error.hpp"

namespace bvsrik {

namespace {

using MatRM = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

Real cubic(Real x) {
  const Real ax = std::abs(x);
  if (ax <= 1) return (1.5 * ax - 2.5) * ax * ax + 1.0;
  if (ax < 2) return ((-0.5 * ax + 2.5) * ax - 4.0) * ax + 2.0;
  return 0.0;
}

Tensor make_weights(int in_len, int out_len) {
  const Real scale = static_cast<Real>(out_len) / in_len;
  const bool shrink = scale < 1.0;
  const Real width = shrink ? 4.0 / scale : 4.0;
  const int taps = static_cast<int>(std::ceil(width)) + 2;
  Tensor w({out_len, in_len});
  for (int i = 0; i < out_len; ++i) {
    const Real u = (i + 0.5) / scale - 0.5;
    const int left = static_cast<int>(std::floor(u - width / 2));
    Real total = 0;
    std::vector<std::pair<int, Real>> contrib;
    for (int p = 0; p < taps; ++p) {
      const int idx = left + p;
      const Real dist = u - idx;
      const Real wt = shrink ? scale * cubic(scale * dist) : cubic(dist);
      if (wt == 0.0) continue;
      contrib.emplace_back(std::clamp(idx, 0, in_len - 1), wt);
      total += wt;
    }
    for (auto [idx, wt] : contrib) w[static_cast<std::size_t>(i) * in_len + idx] += wt / total;
  }
  return w;
}

// out_c = rows * x_c * cols^T for every channel.
void apply(const Tensor& rows, const Tensor& cols, const Real* x, int channels, int h, int w, Real* out) {
  const int oh = rows.dim(0), ow = cols.dim(0);
  CMapRM a(rows.ptr(), oh, h);
  CMapRM b(cols.ptr(), ow, w);
  MatRM tmp(oh, w);
  for (int c = 0; c < channels; ++c) {
    tmp.noalias() = a * CMapRM(x + static_cast<std::size_t>(c) * h * w, h, w);
    MapRM(out + static_cast<std::size_t>(c) * oh * ow, oh, ow).noalias() = tmp * b.transpose();
  }
}

}  // namespace

const Tensor& bicubic_weights(int in_len, int out_len) {
  if (in_len < 1 || out_len < 1) throw ValidationError("bicubic_weights: lengths must be positive");
  static std::mutex mutex;
  static std::map<std::pair<int, int>, std::unique_ptr<Tensor>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[{in_len, out_len}];
  if (!slot) slot = std::make_unique<Tensor>(make_weights(in_len, out_len));
  return *slot;
}

Tensor bicubic_resize(const Tensor& image, int out_h, int out_w) {
  if (image.rank() != 3) throw ValidationError("bicubic_resize: expected (C,H,W), got " + shape_str(image.shape()));
  const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor out({c, out_h, out_w});
  apply(bicubic_weights(h, out_h), bicubic_weights(w, out_w), image.ptr(), c, h, w, out.ptr());
  return out;
}

Var bicubic_resize(const Var& image, int out_h, int out_w) {
  const Tensor& t = image.value();
  Tensor out = bicubic_resize(t, out_h, out_w);
  const int c = t.dim(0), h = t.dim(1), w = t.dim(2);
  return make_result(std::move(out), {image}, [c, h, w, out_h, out_w](Node& self) {
    const Tensor& rows = bicubic_weights(h, out_h);
    const Tensor& cols = bicubic_weights(w, out_w);
    Tensor& g = self.parents[0]->grad_buffer();
    CMapRM a(rows.ptr(), out_h, h);
    CMapRM b(cols.ptr(), out_w, w);
    MatRM tmp(h, out_w);
    for (int ch = 0; ch < c; ++ch) {
      tmp.noalias() = a.transpose() * CMapRM(self.grad.ptr() + static_cast<std::size_t>(ch) * out_h * out_w, out_h, out_w);
      MapRM(g.ptr() + static_cast<std::size_t>(ch) * h * w, h, w).noalias() += tmp * b;
    }
  });
}

Tensor rgb_to_luma(const Tensor& rgb) {
  if (rgb.rank() != 3 || rgb.dim(0) != 3) {
    throw ValidationError("rgb_to_luma: expected (3,H,W), got " + shape_str(rgb.shape()));
  }
  const int h = rgb.dim(1), w = rgb.dim(2);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor y({1, h, w});
  for (std::size_t p = 0; p < plane; ++p) {
    y[p] = 0.299 * rgb[p] + 0.587 * rgb[plane + p] + 0.114 * rgb[2 * plane + p];
  }
  return y;
}

}  // namespace bvsrik
