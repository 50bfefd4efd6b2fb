#include <Eigen/Dense>
#include <algorithm>

#include "bvsrik/error.hpp"
#include "bvsrik/ops.hpp"

namespace bvsrik {

namespace {

using MatRM = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

struct ConvGeometry {
  int cin, h, w, k, stride, pad, ho, wo;
};

ConvGeometry geometry(const Tensor& x, int k, int stride, int pad) {
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), k, stride, pad, 0, 0};
  g.ho = (g.h + 2 * pad - k) / stride + 1;
  g.wo = (g.w + 2 * pad - k) / stride + 1;
  if (g.ho <= 0 || g.wo <= 0) {
    throw ValidationError("conv2d: kernel " + std::to_string(k) + " does not fit input " +
                          shape_str(x.shape()));
  }
  return g;
}

// col[(c*k + a)*k + b, oi*wo + oj] = x[c, oi*stride - pad + a, oj*stride - pad + b]
void im2col(const Real* x, const ConvGeometry& g, Real* col) {
  const std::size_t out_plane = static_cast<std::size_t>(g.ho) * g.wo;
  for (int c = 0; c < g.cin; ++c) {
    const Real* xc = x + static_cast<std::size_t>(c) * g.h * g.w;
    for (int a = 0; a < g.k; ++a) {
      for (int b = 0; b < g.k; ++b) {
        Real* row = col + ((static_cast<std::size_t>(c) * g.k + a) * g.k + b) * out_plane;
        for (int oi = 0; oi < g.ho; ++oi) {
          const int i = oi * g.stride - g.pad + a;
          Real* dst = row + static_cast<std::size_t>(oi) * g.wo;
          if (i < 0 || i >= g.h) {
            std::fill(dst, dst + g.wo, 0.0);
            continue;
          }
          const Real* src = xc + static_cast<std::size_t>(i) * g.w;
          if (g.stride == 1) {
            for (int oj = 0; oj < g.wo; ++oj) {
              const int j = oj - g.pad + b;
              dst[oj] = (j >= 0 && j < g.w) ? src[j] : 0.0;
            }
          } else {
            for (int oj = 0; oj < g.wo; ++oj) {
              const int j = oj * g.stride - g.pad + b;
              dst[oj] = (j >= 0 && j < g.w) ? src[j] : 0.0;
            }
          }
        }
      }
    }
  }
}

void col2im(const Real* col, const ConvGeometry& g, Real* dx) {
  const std::size_t out_plane = static_cast<std::size_t>(g.ho) * g.wo;
  for (int c = 0; c < g.cin; ++c) {
    Real* xc = dx + static_cast<std::size_t>(c) * g.h * g.w;
    for (int a = 0; a < g.k; ++a) {
      for (int b = 0; b < g.k; ++b) {
        const Real* row = col + ((static_cast<std::size_t>(c) * g.k + a) * g.k + b) * out_plane;
        for (int oi = 0; oi < g.ho; ++oi) {
          const int i = oi * g.stride - g.pad + a;
          if (i < 0 || i >= g.h) continue;
          const Real* src = row + static_cast<std::size_t>(oi) * g.wo;
          Real* dst = xc + static_cast<std::size_t>(i) * g.w;
          for (int oj = 0; oj < g.wo; ++oj) {
            const int j = oj * g.stride - g.pad + b;
            if (j >= 0 && j < g.w) dst[j] += src[oj];
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  const Tensor& tx = x.value();
  const Tensor& tw = weight.value();
  if (tx.rank() != 3) throw ValidationError("conv2d: input must be (C,H,W), got " + shape_str(tx.shape()));
  if (tw.rank() != 4 || tw.dim(1) != tx.dim(0) || tw.dim(2) != tw.dim(3)) {
    throw ValidationError("conv2d: weight " + shape_str(tw.shape()) + " incompatible with input " +
                          shape_str(tx.shape()));
  }
  if (stride < 1 || pad < 0) throw ValidationError("conv2d: invalid stride/padding");
  const int cout = tw.dim(0);
  const bool has_bias = bias.defined();
  if (has_bias && bias.value().size() != static_cast<std::size_t>(cout)) {
    throw ValidationError("conv2d: bias size mismatch");
  }
  const ConvGeometry g = geometry(tx, tw.dim(2), stride, pad);
  const int kdim = g.cin * g.k * g.k;
  const int npix = g.ho * g.wo;

  Tensor out({cout, g.ho, g.wo});
  MapRM om(out.ptr(), cout, npix);
  if (g.k == 1 && stride == 1 && pad == 0) {
    om.noalias() = CMapRM(tw.ptr(), cout, kdim) * CMapRM(tx.ptr(), kdim, npix);
  } else {
    std::vector<Real> col(static_cast<std::size_t>(kdim) * npix);
    im2col(tx.ptr(), g, col.data());
    om.noalias() = CMapRM(tw.ptr(), cout, kdim) * CMapRM(col.data(), kdim, npix);
  }
  if (has_bias) {
    for (int c = 0; c < cout; ++c) om.row(c).array() += bias.value()[c];
  }

  std::vector<Var> parents{x, weight};
  if (has_bias) parents.push_back(bias);
  return make_result(std::move(out), std::move(parents), [g, cout, kdim, npix](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    CMapRM gout(self.grad.ptr(), cout, npix);
    const bool pointwise = g.k == 1 && g.stride == 1 && g.pad == 0;
    std::vector<Real> col;
    const Real* col_ptr = px.value.ptr();
    if (!pointwise && pw.requires_grad) {
      col.resize(static_cast<std::size_t>(kdim) * npix);
      im2col(px.value.ptr(), g, col.data());
      col_ptr = col.data();
    }
    if (pw.requires_grad) {
      MapRM(pw.grad_buffer().ptr(), cout, kdim).noalias() +=
          gout * CMapRM(col_ptr, kdim, npix).transpose();
    }
    if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
      Tensor& gb = self.parents[2]->grad_buffer();
      for (int c = 0; c < cout; ++c) gb[c] += gout.row(c).sum();
    }
    if (px.requires_grad) {
      if (pointwise) {
        MapRM(px.grad_buffer().ptr(), kdim, npix).noalias() +=
            CMapRM(pw.value.ptr(), cout, kdim).transpose() * gout;
      } else {
        std::vector<Real> dcol(static_cast<std::size_t>(kdim) * npix);
        MapRM(dcol.data(), kdim, npix).noalias() = CMapRM(pw.value.ptr(), cout, kdim).transpose() * gout;
        col2im(dcol.data(), g, px.grad_buffer().ptr());
      }
    }
  });
}

Var depthwise_conv2d(const Var& x, const Var& weight, const Var& bias, int pad) {
  const Tensor& tx = x.value();
  const Tensor& tw = weight.value();
  if (tx.rank() != 3 || tw.rank() != 3 || tw.dim(0) != tx.dim(0) || tw.dim(1) != tw.dim(2)) {
    throw ValidationError("depthwise_conv2d: weight " + shape_str(tw.shape()) +
                          " incompatible with input " + shape_str(tx.shape()));
  }
  const int channels = tx.dim(0), h = tx.dim(1), w = tx.dim(2), k = tw.dim(1);
  const int ho = h + 2 * pad - k + 1, wo = w + 2 * pad - k + 1;
  if (ho <= 0 || wo <= 0) throw ValidationError("depthwise_conv2d: kernel larger than input");
  const bool has_bias = bias.defined();
  Tensor out({channels, ho, wo});
  for (int c = 0; c < channels; ++c) {
    const Real* xc = tx.ptr() + static_cast<std::size_t>(c) * h * w;
    const Real* wc = tw.ptr() + static_cast<std::size_t>(c) * k * k;
    Real* oc = out.ptr() + static_cast<std::size_t>(c) * ho * wo;
    const Real b0 = has_bias ? bias.value()[c] : 0.0;
    std::fill(oc, oc + static_cast<std::size_t>(ho) * wo, b0);
    for (int a = 0; a < k; ++a) {
      for (int b = 0; b < k; ++b) {
        const Real wv = wc[a * k + b];
        for (int oi = 0; oi < ho; ++oi) {
          const int i = oi - pad + a;
          if (i < 0 || i >= h) continue;
          const int j_lo = std::max(0, pad - b), j_hi = std::min(wo, w + pad - b);
          const Real* src = xc + static_cast<std::size_t>(i) * w - pad + b;
          Real* dst = oc + static_cast<std::size_t>(oi) * wo;
          for (int oj = j_lo; oj < j_hi; ++oj) dst[oj] += wv * src[oj];
        }
      }
    }
  }
  std::vector<Var> parents{x, weight};
  if (has_bias) parents.push_back(bias);
  return make_result(std::move(out), std::move(parents), [channels, h, w, k, pad, ho, wo](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    Real* gx = px.requires_grad ? px.grad_buffer().ptr() : nullptr;
    Real* gw = pw.requires_grad ? pw.grad_buffer().ptr() : nullptr;
    Real* gb = (self.parents.size() > 2 && self.parents[2]->requires_grad)
                   ? self.parents[2]->grad_buffer().ptr()
                   : nullptr;
    for (int c = 0; c < channels; ++c) {
      const Real* xc = px.value.ptr() + static_cast<std::size_t>(c) * h * w;
      const Real* wc = pw.value.ptr() + static_cast<std::size_t>(c) * k * k;
      const Real* gc = self.grad.ptr() + static_cast<std::size_t>(c) * ho * wo;
      if (gb) {
        Real acc = 0;
        for (int p = 0; p < ho * wo; ++p) acc += gc[p];
        gb[c] += acc;
      }
      for (int a = 0; a < k; ++a) {
        for (int b = 0; b < k; ++b) {
          const Real wv = wc[a * k + b];
          Real acc = 0;
          for (int oi = 0; oi < ho; ++oi) {
            const int i = oi - pad + a;
            if (i < 0 || i >= h) continue;
            const int j_lo = std::max(0, pad - b), j_hi = std::min(wo, w + pad - b);
            const Real* src = xc + static_cast<std::size_t>(i) * w - pad + b;
            const Real* go = gc + static_cast<std::size_t>(oi) * wo;
            if (gx) {
              Real* dst = gx + static_cast<std::size_t>(c) * h * w + static_cast<std::size_t>(i) * w - pad + b;
              for (int oj = j_lo; oj < j_hi; ++oj) dst[oj] += wv * go[oj];
            }
            for (int oj = j_lo; oj < j_hi; ++oj) acc += go[oj] * src[oj];
          }
          if (gw) gw[static_cast<std::size_t>(c) * k * k + a * k + b] += acc;
        }
      }
    }
  });
}

Var pixel_shuffle(const Var& x, int factor) {
  const Tensor& t = x.value();
  if (t.rank() != 3 || factor < 1 || t.dim(0) % (factor * factor) != 0) {
    throw ValidationError("pixel_shuffle: channels of " + shape_str(t.shape()) +
                          " not divisible by factor^2");
  }
  const int r = factor, c_out = t.dim(0) / (r * r), h = t.dim(1), w = t.dim(2);
  Tensor out({c_out, h * r, w * r});
  auto index_in = [=](int c, int a, int b, int i, int j) {
    return ((static_cast<std::size_t>(c) * r * r + a * r + b) * h + i) * w + j;
  };
  auto index_out = [=](int c, int a, int b, int i, int j) {
    return (static_cast<std::size_t>(c) * h * r + i * r + a) * (w * r) + j * r + b;
  };
  for (int c = 0; c < c_out; ++c)
    for (int a = 0; a < r; ++a)
      for (int b = 0; b < r; ++b)
        for (int i = 0; i < h; ++i)
          for (int j = 0; j < w; ++j) out[index_out(c, a, b, i, j)] = t[index_in(c, a, b, i, j)];
  return make_result(std::move(out), {x}, [=](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (int c = 0; c < c_out; ++c)
      for (int a = 0; a < r; ++a)
        for (int b = 0; b < r; ++b)
          for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) g[index_in(c, a, b, i, j)] += self.grad[index_out(c, a, b, i, j)];
  });
}

}  // namespace bvsrik
