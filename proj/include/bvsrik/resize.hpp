#pragma once

#include "bvsrik/autograd.hpp"

namespace bvsrik {

/// Bicubic interpolation weights (a = -0.5) mapping a length-in_len axis to
/// out_len samples, as a dense (out_len, in_len) row-stochastic matrix.
/// Downscaling widens the kernel by the scale factor (antialiasing); borders
/// replicate. Pixel centers are aligned: u = (i + 0.5) * in/out - 0.5.
const Tensor& bicubic_weights(int in_len, int out_len);

/// Resizes every channel of a (C, H, W) tensor.
Tensor bicubic_resize(const Tensor& image, int out_h, int out_w);
/// Differentiable variant (linear in the input).
Var bicubic_resize(const Var& image, int out_h, int out_w);

/// BT.601 full-range luma of a (3, H, W) RGB image: (1, H, W).
Tensor rgb_to_luma(const Tensor& rgb);

}  // namespace bvsrik
