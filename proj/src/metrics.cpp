#include "bvsrik/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "bvsrik/error.hpp"
#include "bvsrik/resize.hpp"

namespace bvsrik {

namespace {

constexpr int kWindow = 11;
constexpr Real kWindowSigma = 1.5;

void require_same(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ValidationError(std::string(what) + ": shapes " + shape_str(a.shape()) + " and " +
                          shape_str(b.shape()) + " differ");
  }
}

// Valid-mode separable correlation with the normalized Gaussian window.
std::vector<Real> window_filter(const std::vector<Real>& x, int h, int w) {
  static const std::vector<Real> taps = [] {
    std::vector<Real> t(kWindow);
    Real total = 0;
    for (int k = 0; k < kWindow; ++k) {
      const Real d = k - kWindow / 2;
      total += (t[k] = std::exp(-d * d / (2 * kWindowSigma * kWindowSigma)));
    }
    for (Real& v : t) v /= total;
    return t;
  }();
  const int oh = h - kWindow + 1, ow = w - kWindow + 1;
  std::vector<Real> rows(static_cast<std::size_t>(h) * ow), out(static_cast<std::size_t>(oh) * ow);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < ow; ++j) {
      Real acc = 0;
      for (int k = 0; k < kWindow; ++k) acc += taps[k] * x[static_cast<std::size_t>(i) * w + j + k];
      rows[static_cast<std::size_t>(i) * ow + j] = acc;
    }
  for (int i = 0; i < oh; ++i)
    for (int j = 0; j < ow; ++j) {
      Real acc = 0;
      for (int k = 0; k < kWindow; ++k) acc += taps[k] * rows[static_cast<std::size_t>(i + k) * ow + j];
      out[static_cast<std::size_t>(i) * ow + j] = acc;
    }
  return out;
}

}  // namespace

Real psnr_y(const Tensor& a, const Tensor& b) {
  require_same(a, b, "psnr_y");
  const Tensor ya = rgb_to_luma(a), yb = rgb_to_luma(b);
  Real mse = 0;
  for (std::size_t p = 0; p < ya.size(); ++p) {
    const Real d = ya[p] - yb[p];
    mse += d * d;
  }
  mse /= static_cast<Real>(ya.size());
  if (mse == 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

Real ssim(const Tensor& a, const Tensor& b) {
  require_same(a, b, "ssim");
  if (!(a.rank() == 2 || (a.rank() == 3 && a.dim(0) == 1))) {
    throw ValidationError("ssim: expected a single-channel image, got " + shape_str(a.shape()));
  }
  const int h = a.dim(a.rank() - 2), w = a.dim(a.rank() - 1);
  if (h < kWindow || w < kWindow) {
    throw ValidationError("ssim: image " + shape_str(a.shape()) + " smaller than the 11x11 window");
  }
  const std::vector<Real>& x = a.storage();
  const std::vector<Real>& y = b.storage();
  std::vector<Real> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t p = 0; p < x.size(); ++p) {
    xx[p] = x[p] * x[p];
    yy[p] = y[p] * y[p];
    xy[p] = x[p] * y[p];
  }
  const auto mx = window_filter(x, h, w), my = window_filter(y, h, w);
  const auto sxx = window_filter(xx, h, w), syy = window_filter(yy, h, w), sxy = window_filter(xy, h, w);
  const Real c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  Real total = 0;
  for (std::size_t p = 0; p < mx.size(); ++p) {
    const Real vx = sxx[p] - mx[p] * mx[p], vy = syy[p] - my[p] * my[p], cov = sxy[p] - mx[p] * my[p];
    total += ((2 * mx[p] * my[p] + c1) * (2 * cov + c2)) /
             ((mx[p] * mx[p] + my[p] * my[p] + c1) * (vx + vy + c2));
  }
  return total / static_cast<Real>(mx.size());
}

Real ssim_y(const Tensor& a, const Tensor& b) {
  require_same(a, b, "ssim_y");
  return ssim(rgb_to_luma(a), rgb_to_luma(b));
}

Real tof(const std::vector<Tensor>& sr_clip, const std::vector<Tensor>& gt_clip, const FlowEstimator& flow) {
  if (sr_clip.size() != gt_clip.size()) throw ValidationError("tof: clips differ in length");
  if (sr_clip.size() < 2) throw ValidationError("tof: clips need at least 2 frames");
  Real total = 0;
  for (std::size_t t = 1; t < sr_clip.size(); ++t) {
    require_same(sr_clip[t], gt_clip[t], "tof");
    const FlowField fg = flow.estimate(gt_clip[t - 1], gt_clip[t]);
    const FlowField fs = flow.estimate(sr_clip[t - 1], sr_clip[t]);
    Real diff = 0;
    for (std::size_t p = 0; p < fg.size(); ++p) diff += std::abs(fg[p] - fs[p]);
    total += diff / static_cast<Real>(fg.size());
  }
  return total / static_cast<Real>(sr_clip.size() - 1);
}

}  // namespace bvsrik
