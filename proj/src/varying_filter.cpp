#include "bvsrik/varying_filter.hpp"

#include <algorithm>
#include <cmath>

#include "bvsrik/error.hpp"

namespace bvsrik {

namespace {

void validate(const Tensor& input, const MultiScaleDictionary& dict, const CoefficientField& coeff) {
  if (input.rank() != 3 || input.dim(0) < 1) {
    throw ValidationError("filter: input must be (C,H,W) with C >= 1, got " + shape_str(input.shape()));
  }
  if (dict.scales.empty()) throw ValidationError("filter: empty dictionary");
  const Tensor& omega = coeff.omega.value();
  const Tensor& mu = coeff.mu.value();
  const int h = input.dim(1), w = input.dim(2);
  if (omega.shape() != Shape{dict.atom_count(), h, w}) {
    throw ValidationError("filter: omega shape " + shape_str(omega.shape()) + " expected " +
                          shape_str({dict.atom_count(), h, w}));
  }
  if (mu.shape() != Shape{dict.scale_count(), h, w}) {
    throw ValidationError("filter: mu shape " + shape_str(mu.shape()) + " expected " +
                          shape_str({dict.scale_count(), h, w}));
  }
  for (int r = 1; r <= dict.scale_count(); ++r) {
    const int k = dict.kernel_size(r);
    if (dict.scales[r - 1].shape() != Shape{dict.atom_count(), k, k}) {
      throw ValidationError("filter: dictionary scale " + std::to_string(r) + " has shape " +
                            shape_str(dict.scales[r - 1].shape()));
    }
  }
  check_scale_weights(mu);
}

// Replicate-pads every channel by `h` cells on each side.
Tensor pad_replicate(const Tensor& x, int h) {
  const int channels = x.dim(0), rows = x.dim(1), cols = x.dim(2);
  Tensor out({channels, rows + 2 * h, cols + 2 * h});
  for (int c = 0; c < channels; ++c)
    for (int u = 0; u < rows + 2 * h; ++u) {
      const int i = std::clamp(u - h, 0, rows - 1);
      for (int v = 0; v < cols + 2 * h; ++v) out.at(c, u, v) = x.at(c, i, std::clamp(v - h, 0, cols - 1));
    }
  return out;
}

// Adjoint of pad_replicate: folds padded gradients back onto the border.
void unpad_replicate_add(const Tensor& padded_grad, int h, Tensor& grad) {
  const int channels = grad.dim(0), rows = grad.dim(1), cols = grad.dim(2);
  for (int c = 0; c < channels; ++c)
    for (int u = 0; u < rows + 2 * h; ++u) {
      const int i = std::clamp(u - h, 0, rows - 1);
      for (int v = 0; v < cols + 2 * h; ++v) grad.at(c, i, std::clamp(v - h, 0, cols - 1)) += padded_grad.at(c, u, v);
    }
}

// y[c,i,j] = sum_{a,b} kernel[a,b] * padded[c, i+2h-a, j+2h-b]
void convolve_padded(const Tensor& padded, const Real* kernel, int k, Tensor& y) {
  const int h = k / 2;
  const int channels = y.dim(0), rows = y.dim(1), cols = y.dim(2);
  const int pcols = padded.dim(2);
  y.fill(0.0);
  for (int c = 0; c < channels; ++c) {
    for (int a = 0; a < k; ++a) {
      for (int b = 0; b < k; ++b) {
        const Real kv = kernel[a * k + b];
        if (kv == 0.0) continue;
        for (int i = 0; i < rows; ++i) {
          const Real* src = padded.ptr() + (static_cast<std::size_t>(c) * padded.dim(1) + i + 2 * h - a) * pcols + 2 * h - b;
          Real* dst = y.ptr() + (static_cast<std::size_t>(c) * rows + i) * cols;
          for (int j = 0; j < cols; ++j) dst[j] += kv * src[j];
        }
      }
    }
  }
}

}  // namespace

void check_scale_weights(const Tensor& mu, Real tol) {
  if (mu.rank() != 3) throw ValidationError("scale weights must be (R,H,W)");
  const int scales = mu.dim(0);
  const std::size_t plane = static_cast<std::size_t>(mu.dim(1)) * mu.dim(2);
  for (std::size_t p = 0; p < plane; ++p) {
    Real s = 0;
    for (int r = 0; r < scales; ++r) {
      const Real v = mu[r * plane + p];
      if (!(v >= -tol)) {
        throw ContractViolation("scale weights negative or non-finite at pixel " + std::to_string(p));
      }
      s += v;
    }
    if (!(std::abs(s - 1.0) <= tol)) {
      throw ContractViolation("scale weights sum to " + std::to_string(s) + " at pixel " +
                              std::to_string(p) + " (expected 1)");
    }
  }
}

Tensor per_pixel_kernel(const MultiScaleDictionary& dict, const CoefficientField& coeff, int i, int j) {
  const Tensor& omega = coeff.omega.value();
  const Tensor& mu = coeff.mu.value();
  if (i < 0 || j < 0 || i >= omega.dim(1) || j >= omega.dim(2)) {
    throw ValidationError("per_pixel_kernel: pixel (" + std::to_string(i) + ", " + std::to_string(j) +
                          ") outside " + std::to_string(omega.dim(1)) + "x" + std::to_string(omega.dim(2)));
  }
  if (omega.dim(0) != dict.atom_count() || mu.dim(0) != dict.scale_count()) {
    throw ValidationError("per_pixel_kernel: coefficient field does not match dictionary");
  }
  const int kmax = dict.max_kernel_size();
  Tensor kernel({kmax, kmax});
  for (int r = 1; r <= dict.scale_count(); ++r) {
    const int k = dict.kernel_size(r);
    const int offset = (kmax - k) / 2;
    const Real m = mu.at(r - 1, i, j);
    const Tensor& grids = dict.scales[r - 1].value();
    for (int n = 0; n < dict.atom_count(); ++n) {
      const Real wgt = m * omega.at(n, i, j);
      for (int a = 0; a < k; ++a)
        for (int b = 0; b < k; ++b)
          kernel[(a + offset) * kmax + b + offset] += wgt * grids[(static_cast<std::size_t>(n) * k + a) * k + b];
    }
  }
  return kernel;
}

Var filter(const Var& input, const MultiScaleDictionary& dict, const CoefficientField& coeff) {
  validate(input.value(), dict, coeff);
  const Tensor& x = input.value();
  const int channels = x.dim(0), rows = x.dim(1), cols = x.dim(2);
  const int n_atoms = dict.atom_count(), n_scales = dict.scale_count();
  const std::size_t plane = static_cast<std::size_t>(rows) * cols;

  Tensor out(x.shape());
  Tensor y(x.shape());
  {
    const Tensor& omega = coeff.omega.value();
    const Tensor& mu = coeff.mu.value();
    for (int r = 1; r <= n_scales; ++r) {
      const int k = dict.kernel_size(r);
      const Tensor padded = pad_replicate(x, k / 2);
      const Tensor& grids = dict.scales[r - 1].value();
      for (int n = 0; n < n_atoms; ++n) {
        convolve_padded(padded, grids.ptr() + static_cast<std::size_t>(n) * k * k, k, y);
        const Real* om = omega.ptr() + n * plane;
        const Real* m = mu.ptr() + (r - 1) * plane;
        for (int c = 0; c < channels; ++c) {
          Real* o = out.ptr() + c * plane;
          const Real* yc = y.ptr() + c * plane;
          for (std::size_t p = 0; p < plane; ++p) o[p] += m[p] * om[p] * yc[p];
        }
      }
    }
  }

  std::vector<Var> parents{input, coeff.omega, coeff.mu};
  for (const Var& s : dict.scales) parents.push_back(s);
  return make_result(std::move(out), std::move(parents), [=](Node& self) {
    Node& px = *self.parents[0];
    Node& pomega = *self.parents[1];
    Node& pmu = *self.parents[2];
    const Tensor& xv = px.value;
    const Tensor& omega = pomega.value;
    const Tensor& mu = pmu.value;
    const Tensor& g = self.grad;
    Tensor yv(xv.shape());
    Tensor dy(xv.shape());
    for (int r = 1; r <= n_scales; ++r) {
      Node& pdict = *self.parents[2 + r];
      const int k = 2 * r - 1;
      const int h = k / 2;
      const Tensor padded = pad_replicate(xv, h);
      const Tensor& grids = pdict.value;
      Tensor padded_grad;
      if (px.requires_grad) padded_grad = Tensor(padded.shape());
      const int prow = padded.dim(1), pcol = padded.dim(2);
      for (int n = 0; n < n_atoms; ++n) {
        const Real* kernel = grids.ptr() + static_cast<std::size_t>(n) * k * k;
        const Real* om = omega.ptr() + n * plane;
        const Real* m = mu.ptr() + (r - 1) * plane;
        if (pomega.requires_grad || pmu.requires_grad) {
          convolve_padded(padded, kernel, k, yv);
          Real* gom = pomega.requires_grad ? pomega.grad_buffer().ptr() + n * plane : nullptr;
          Real* gmu = pmu.requires_grad ? pmu.grad_buffer().ptr() + (r - 1) * plane : nullptr;
          for (std::size_t p = 0; p < plane; ++p) {
            Real s = 0;
            for (int c = 0; c < channels; ++c) s += g[c * plane + p] * yv[c * plane + p];
            if (gom) gom[p] += m[p] * s;
            if (gmu) gmu[p] += om[p] * s;
          }
        }
        if (!px.requires_grad && !pdict.requires_grad) continue;
        for (int c = 0; c < channels; ++c)
          for (std::size_t p = 0; p < plane; ++p) dy[c * plane + p] = m[p] * om[p] * g[c * plane + p];
        Real* gk = pdict.requires_grad ? pdict.grad_buffer().ptr() + static_cast<std::size_t>(n) * k * k : nullptr;
        for (int c = 0; c < channels; ++c) {
          for (int a = 0; a < k; ++a) {
            for (int b = 0; b < k; ++b) {
              const Real kv = kernel[a * k + b];
              Real acc = 0;
              for (int i = 0; i < rows; ++i) {
                const std::size_t prow_off = (static_cast<std::size_t>(c) * prow + i + 2 * h - a) * pcol + 2 * h - b;
                const Real* src = padded.ptr() + prow_off;
                const Real* d = dy.ptr() + (static_cast<std::size_t>(c) * rows + i) * cols;
                if (gk) {
                  for (int j = 0; j < cols; ++j) acc += d[j] * src[j];
                }
                if (px.requires_grad) {
                  Real* dst = padded_grad.ptr() + prow_off;
                  for (int j = 0; j < cols; ++j) dst[j] += kv * d[j];
                }
              }
              if (gk) gk[a * k + b] += acc;
            }
          }
        }
      }
      if (px.requires_grad) unpad_replicate_add(padded_grad, h, px.grad_buffer());
    }
  });
}

Tensor brute_force_filter(const Tensor& input, const MultiScaleDictionary& dict, const CoefficientField& coeff) {
  validate(input, dict, coeff);
  const int channels = input.dim(0), rows = input.dim(1), cols = input.dim(2);
  const int kmax = dict.max_kernel_size();
  const int h = kmax / 2;
  Tensor out(input.shape());
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      const Tensor k = per_pixel_kernel(dict, coeff, i, j);
      for (int c = 0; c < channels; ++c) {
        Real acc = 0;
        for (int x = 0; x < kmax; ++x) {
          const int si = std::clamp(i - (x - h), 0, rows - 1);
          for (int y = 0; y < kmax; ++y) {
            const int sj = std::clamp(j - (y - h), 0, cols - 1);
            acc += k[x * kmax + y] * input.at(c, si, sj);
          }
        }
        out.at(c, i, j) = acc;
      }
    }
  }
  return out;
}

}  // namespace bvsrik
