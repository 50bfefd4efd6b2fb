#include "bvsrik/flow.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "bvsrik/error.hpp"
#include "bvsrik/resize.hpp"

namespace bvsrik {

namespace {

struct Sample {
  int y0, y1, x0, x1;
  Real wy, wx;
  bool interior_y, interior_x;
};

Sample bilinear_sample(Real y, Real x, int h, int w) {
  Sample s{};
  s.interior_y = y > 0 && y < h - 1;
  s.interior_x = x > 0 && x < w - 1;
  const Real yc = std::clamp(y, Real{0}, static_cast<Real>(h - 1));
  const Real xc = std::clamp(x, Real{0}, static_cast<Real>(w - 1));
  s.y0 = static_cast<int>(std::floor(yc));
  s.x0 = static_cast<int>(std::floor(xc));
  s.y1 = std::min(s.y0 + 1, h - 1);
  s.x1 = std::min(s.x0 + 1, w - 1);
  s.wy = yc - s.y0;
  s.wx = xc - s.x0;
  return s;
}

void validate_warp(const Tensor& feature, const Tensor& flow) {
  if (feature.rank() != 3 || flow.rank() != 3 || flow.dim(0) != 2 || flow.dim(1) != feature.dim(1) ||
      flow.dim(2) != feature.dim(2)) {
    throw ValidationError("warp: flow " + shape_str(flow.shape()) + " does not match feature " +
                          shape_str(feature.shape()));
  }
}

Tensor warp_value(const Tensor& f, const Tensor& flow) {
  const int channels = f.dim(0), h = f.dim(1), w = f.dim(2);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor out(f.shape());
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const std::size_t p = static_cast<std::size_t>(i) * w + j;
      const Sample s = bilinear_sample(i + flow[plane + p], j + flow[p], h, w);
      const Real w00 = (1 - s.wy) * (1 - s.wx), w01 = (1 - s.wy) * s.wx;
      const Real w10 = s.wy * (1 - s.wx), w11 = s.wy * s.wx;
      for (int c = 0; c < channels; ++c) {
        const Real* fc = f.ptr() + c * plane;
        out[c * plane + p] = w00 * fc[s.y0 * w + s.x0] + w01 * fc[s.y0 * w + s.x1] +
                             w10 * fc[s.y1 * w + s.x0] + w11 * fc[s.y1 * w + s.x1];
      }
    }
  }
  return out;
}

using Plane = std::vector<Real>;

// Separable Gaussian smoothing with replicate borders.
Plane gaussian_smooth(const Plane& src, int h, int w, Real sigma, int radius) {
  std::vector<Real> taps(2 * radius + 1);
  Real total = 0;
  for (int k = -radius; k <= radius; ++k) total += (taps[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma)));
  for (Real& t : taps) t /= total;
  Plane tmp(src.size()), out(src.size());
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      Real acc = 0;
      for (int k = -radius; k <= radius; ++k) acc += taps[k + radius] * src[i * w + std::clamp(j + k, 0, w - 1)];
      tmp[i * w + j] = acc;
    }
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      Real acc = 0;
      for (int k = -radius; k <= radius; ++k) acc += taps[k + radius] * tmp[std::clamp(i + k, 0, h - 1) * w + j];
      out[i * w + j] = acc;
    }
  return out;
}

}  // namespace

Tensor warp(const Tensor& feature, const FlowField& flow) {
  validate_warp(feature, flow);
  return warp_value(feature, flow);
}

Var warp(const Var& feature, const Var& flow) {
  validate_warp(feature.value(), flow.value());
  Tensor out = warp_value(feature.value(), flow.value());
  return make_result(std::move(out), {feature, flow}, [](Node& self) {
    Node& pf = *self.parents[0];
    Node& pflow = *self.parents[1];
    const Tensor& f = pf.value;
    const Tensor& fl = pflow.value;
    const int channels = f.dim(0), h = f.dim(1), w = f.dim(2);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    Real* gf = pf.requires_grad ? pf.grad_buffer().ptr() : nullptr;
    Real* gflow = pflow.requires_grad ? pflow.grad_buffer().ptr() : nullptr;
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        const std::size_t p = static_cast<std::size_t>(i) * w + j;
        const Sample s = bilinear_sample(i + fl[plane + p], j + fl[p], h, w);
        const Real w00 = (1 - s.wy) * (1 - s.wx), w01 = (1 - s.wy) * s.wx;
        const Real w10 = s.wy * (1 - s.wx), w11 = s.wy * s.wx;
        Real dx = 0, dy = 0;
        for (int c = 0; c < channels; ++c) {
          const Real g = self.grad[c * plane + p];
          const Real* fc = f.ptr() + c * plane;
          const Real f00 = fc[s.y0 * w + s.x0], f01 = fc[s.y0 * w + s.x1];
          const Real f10 = fc[s.y1 * w + s.x0], f11 = fc[s.y1 * w + s.x1];
          if (gf) {
            Real* gc = gf + c * plane;
            gc[s.y0 * w + s.x0] += g * w00;
            gc[s.y0 * w + s.x1] += g * w01;
            gc[s.y1 * w + s.x0] += g * w10;
            gc[s.y1 * w + s.x1] += g * w11;
          }
          dx += g * ((1 - s.wy) * (f01 - f00) + s.wy * (f11 - f10));
          dy += g * ((1 - s.wx) * (f10 - f00) + s.wx * (f11 - f01));
        }
        if (gflow) {
          if (s.interior_x) gflow[p] += dx;
          if (s.interior_y) gflow[plane + p] += dy;
        }
      }
    }
  });
}

FlowField ZeroFlowEstimator::estimate(const Tensor& target, const Tensor& source) const {
  if (target.rank() != 3 || !target.same_shape(source)) {
    throw ValidationError("flow estimate: frames " + shape_str(target.shape()) + " and " +
                          shape_str(source.shape()) + " differ");
  }
  return Tensor({2, target.dim(1), target.dim(2)});
}

FlowField ClassicalFlowEstimator::estimate(const Tensor& target, const Tensor& source) const {
  if (target.rank() != 3 || !target.same_shape(source) || target.dim(0) != 3) {
    throw ValidationError("flow estimate: frames " + shape_str(target.shape()) + " and " +
                          shape_str(source.shape()) + " must be matching (3,H,W)");
  }
  std::vector<Tensor> tgt{rgb_to_luma(target)}, src{rgb_to_luma(source)};
  while (static_cast<int>(tgt.size()) < options_.max_levels) {
    const Tensor& last = tgt.back();
    const int h = last.dim(1) / 2, w = last.dim(2) / 2;
    if (std::min(h, w) < options_.min_size) break;
    tgt.push_back(bicubic_resize(last, h, w));
    src.push_back(bicubic_resize(src.back(), h, w));
  }

  Tensor flow;
  for (int level = static_cast<int>(tgt.size()) - 1; level >= 0; --level) {
    const int h = tgt[level].dim(1), w = tgt[level].dim(2);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    if (flow.empty()) {
      flow = Tensor({2, h, w});
    } else {
      const Real sy = static_cast<Real>(h) / flow.dim(1), sx = static_cast<Real>(w) / flow.dim(2);
      flow = bicubic_resize(flow, h, w);
      for (std::size_t p = 0; p < plane; ++p) {
        flow[p] *= sx;
        flow[plane + p] *= sy;
      }
    }
    const Plane t(tgt[level].storage());
    for (int iter = 0; iter < options_.warps_per_level; ++iter) {
      const Tensor warped = warp_value(src[level], flow);
      Plane ixx(plane), ixy(plane), iyy(plane), ixt(plane), iyt(plane);
      for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
          const std::size_t p = static_cast<std::size_t>(i) * w + j;
          const Real ix = 0.5 * (warped[i * w + std::min(j + 1, w - 1)] - warped[i * w + std::max(j - 1, 0)]);
          const Real iy = 0.5 * (warped[std::min(i + 1, h - 1) * w + j] - warped[std::max(i - 1, 0) * w + j]);
          const Real it = warped[p] - t[p];
          ixx[p] = ix * ix;
          ixy[p] = ix * iy;
          iyy[p] = iy * iy;
          ixt[p] = ix * it;
          iyt[p] = iy * it;
        }
      }
      const Real sg = options_.window_sigma;
      const int rad = options_.window_radius;
      ixx = gaussian_smooth(ixx, h, w, sg, rad);
      ixy = gaussian_smooth(ixy, h, w, sg, rad);
      iyy = gaussian_smooth(iyy, h, w, sg, rad);
      ixt = gaussian_smooth(ixt, h, w, sg, rad);
      iyt = gaussian_smooth(iyt, h, w, sg, rad);
      for (std::size_t p = 0; p < plane; ++p) {
        const Real a = ixx[p] + options_.ridge, b = ixy[p], d = iyy[p] + options_.ridge;
        const Real det = a * d - b * b;
        if (!(det > 0)) continue;
        // [a b; b d] [du dv]^T = -[ixt iyt]^T
        const Real du = -(d * ixt[p] - b * iyt[p]) / det;
        const Real dv = -(a * iyt[p] - b * ixt[p]) / det;
        flow[p] += std::clamp(du, Real{-2}, Real{2});
        flow[plane + p] += std::clamp(dv, Real{-2}, Real{2});
      }
    }
    Plane fx(flow.ptr(), flow.ptr() + plane), fy(flow.ptr() + plane, flow.ptr() + 2 * plane);
    fx = gaussian_smooth(fx, h, w, 1.0, 1);
    fy = gaussian_smooth(fy, h, w, 1.0, 1);
    std::copy(fx.begin(), fx.end(), flow.ptr());
    std::copy(fy.begin(), fy.end(), flow.ptr() + plane);
  }
  return flow;
}

std::shared_ptr<const FlowEstimator> make_flow_estimator(const std::string& name) {
  if (name == "zero") return std::make_shared<ZeroFlowEstimator>();
  if (name == "classical") return std::make_shared<ClassicalFlowEstimator>();
  throw ValidationError("unknown flow estimator '" + name + "' (expected zero|classical)");
}

}  // namespace bvsrik
