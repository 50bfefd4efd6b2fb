#pragma once

#include <vector>

#include "bvsrik/flow.hpp"
#include "bvsrik/tensor.hpp"

namespace bvsrik {

/// Value reported when the two images are identical.
inline constexpr Real kPsnrCap = 100.0;

/// PSNR on BT.601 luma of (3, H, W) RGB images in [0, 1].
Real psnr_y(const Tensor& a, const Tensor& b);

/// Gaussian-windowed SSIM (11x11, sigma 1.5, K1 0.01, K2 0.03, range 1),
/// averaged over all fully contained windows. Inputs are single-channel
/// (1, H, W) or (H, W).
Real ssim(const Tensor& a, const Tensor& b);
/// ssim on the luma of two RGB frames.
Real ssim_y(const Tensor& a, const Tensor& b);

/// Mean over consecutive pairs of mean |flow(gt_{t-1}, gt_t) - flow(sr_{t-1}, sr_t)|.
Real tof(const std::vector<Tensor>& sr_clip, const std::vector<Tensor>& gt_clip, const FlowEstimator& flow);

}  // namespace bvsrik
