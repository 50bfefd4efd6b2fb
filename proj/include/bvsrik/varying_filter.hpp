#pragma once

#include "bvsrik/autograd.hpp"
#include "bvsrik/kernel_dictionary.hpp"

namespace bvsrik {

/// Per-pixel dictionary weights. omega is (N, H, W) and unconstrained;
/// mu is (R, H, W) and must be a per-pixel probability vector.
struct CoefficientField {
  Var omega;
  Var mu;

  int atoms() const { return omega.dim(0); }
  int scales() const { return mu.dim(0); }
  int height() const { return omega.dim(1); }
  int width() const { return omega.dim(2); }
};

/// Throws ContractViolation when some pixel's mu is negative or does not
/// sum to one within tol.
void check_scale_weights(const Tensor& mu, Real tol = 1e-5);

/// k_{i,j} = sum_r mu[r,i,j] sum_n omega[n,i,j] d_n^r, every atom zero-padded
/// and centered on the largest size.
Tensor per_pixel_kernel(const MultiScaleDictionary& dict, const CoefficientField& coeff, int i, int j);

/// Spatially-varying filtering
///   out[c,i,j] = sum_{n,r} mu[r,i,j] omega[n,i,j] (d_n^r * input[c])[i,j]
/// with true convolution (kernel cell [a,b] reads input[i-(a-h), j-(b-h)]) and
/// replicate padding. Computed as N*R whole-image convolutions followed by a
/// per-pixel weighted sum; one kernel per pixel is shared by all channels.
/// Differentiable in the input, the coefficients and the dictionary.
Var filter(const Var& input, const MultiScaleDictionary& dict, const CoefficientField& coeff);

/// Reference evaluation: materializes k_{i,j} at every pixel and applies it
/// directly. Slow; used to cross-check filter().
Tensor brute_force_filter(const Tensor& input, const MultiScaleDictionary& dict,
                          const CoefficientField& coeff);

}  // namespace bvsrik
