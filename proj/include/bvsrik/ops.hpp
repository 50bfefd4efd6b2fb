#pragma once

#include <vector>

#include "bvsrik/autograd.hpp"

// Differentiable tensor operations. Spatial ops take channel-first (C, H, W)
// tensors; "channel" ops treat axis 0 as the channel axis and flatten the rest.

namespace bvsrik {

// Elementwise.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, Real s);
Var add_scalar(const Var& a, Real s);
Var mul_scalar(const Var& a, const Var& s);
Var div_scalar(const Var& a, const Var& s);
Var relu(const Var& x);
Var leaky_relu(const Var& x, Real slope);
Var gelu(const Var& x);
Var sine(const Var& x);
Var clamp(const Var& x, Real lo, Real hi);

// Channel broadcast.
Var add_channel_bias(const Var& x, const Var& bias);
Var mul_channel(const Var& x, const Var& factor);

// Reductions.
Var sum(const Var& x);
Var mean(const Var& x);

// Shape.
Var reshape(const Var& x, Shape shape);
Var slice0(const Var& x, int begin, int count);
Var concat0(const std::vector<Var>& parts);

// Rank-2 linear algebra.
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var softmax_rows(const Var& a);

// Per-pixel ops over the channel axis of (C, H, W).
Var softmax_channels(const Var& x);
Var layer_norm_channels(const Var& x, const Var& gamma, const Var& beta, Real eps = 1e-5);

// Convolutions with zero padding. Weight layouts: conv2d (Cout, Cin, k, k),
// depthwise (C, k, k). An undefined bias Var means no bias.
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);
Var depthwise_conv2d(const Var& x, const Var& weight, const Var& bias, int pad);
/// (C*r*r, H, W) -> (C, r*H, r*W); out[c, i*r+a, j*r+b] = in[c*r*r + a*r + b, i, j].
Var pixel_shuffle(const Var& x, int factor);

/// mean(sqrt((a - b)^2 + eps^2)).
Var charbonnier(const Var& a, const Var& b, Real eps);

}  // namespace bvsrik
