#include "bvsrik/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "bvsrik/error.hpp"

namespace bvsrik {

namespace {

using MatRM = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

void check_same(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ValidationError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
  }
}

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

// Elementwise unary op with derivative expressed through input x and output y.
template <typename F, typename D>
Var unary(const Var& x, F f, D dfdx) {
  Tensor out = Tensor::zeros_like(x.value());
  const Tensor& in = x.value();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return make_result(std::move(out), {x}, [dfdx](Node& self) {
    Node& p = parent(self, 0);
    Tensor& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * dfdx(p.value[i], self.value[i]);
  });
}

std::size_t inner_size(const Tensor& t) { return t.rank() == 0 ? 1 : t.size() / t.dim(0); }

}  // namespace

Var add(const Var& a, const Var& b) {
  check_same(a, b, "add");
  return make_result(a.value() + b.value(), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      Node& p = parent(self, k);
      if (p.requires_grad) p.grad_buffer() += self.grad;
    }
  });
}

Var sub(const Var& a, const Var& b) {
  check_same(a, b, "sub");
  return make_result(a.value() - b.value(), {a, b}, [](Node& self) {
    if (parent(self, 0).requires_grad) parent(self, 0).grad_buffer() += self.grad;
    if (parent(self, 1).requires_grad) parent(self, 1).grad_buffer() -= self.grad;
  });
}

Var mul(const Var& a, const Var& b) {
  check_same(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    if (pa.requires_grad) {
      Tensor& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      Tensor& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

Var scale(const Var& a, Real s) {
  return make_result(a.value() * s, {a}, [s](Node& self) {
    Tensor& g = parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

Var add_scalar(const Var& a, Real s) {
  Tensor out = a.value();
  for (Real& v : out.storage()) v += s;
  return make_result(std::move(out), {a},
                     [](Node& self) { parent(self, 0).grad_buffer() += self.grad; });
}

Var mul_scalar(const Var& a, const Var& s) {
  if (s.value().size() != 1) throw ValidationError("mul_scalar: factor must have one element");
  const Real k = s.value()[0];
  return make_result(a.value() * k, {a, s}, [k](Node& self) {
    Node& pa = parent(self, 0);
    Node& ps = parent(self, 1);
    if (pa.requires_grad) {
      Tensor& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += k * self.grad[i];
    }
    if (ps.requires_grad) {
      Real acc = 0;
      for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * pa.value[i];
      ps.grad_buffer()[0] += acc;
    }
  });
}

Var div_scalar(const Var& a, const Var& s) {
  if (s.value().size() != 1) throw ValidationError("div_scalar: divisor must have one element");
  const Real d = s.value()[0];
  if (d == 0) throw ContractViolation("div_scalar: division by zero");
  return make_result(a.value() * (1.0 / d), {a, s}, [d](Node& self) {
    Node& pa = parent(self, 0);
    Node& ps = parent(self, 1);
    if (pa.requires_grad) {
      Tensor& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / d;
    }
    if (ps.requires_grad) {
      Real acc = 0;
      for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * self.value[i];
      ps.grad_buffer()[0] -= acc / d;
    }
  });
}

Var relu(const Var& x) {
  return unary(
      x, [](Real v) { return v > 0 ? v : 0; }, [](Real v, Real) { return v > 0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& x, Real slope) {
  return unary(
      x, [slope](Real v) { return v > 0 ? v : slope * v; },
      [slope](Real v, Real) { return v > 0 ? 1.0 : slope; });
}

Var gelu(const Var& x) {
  constexpr Real inv_sqrt2 = 0.70710678118654752440;
  const Real inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return unary(
      x, [](Real v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
      [inv_sqrt_2pi](Real v, Real) {
        return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
      });
}

Var sine(const Var& x) {
  return unary(
      x, [](Real v) { return std::sin(v); }, [](Real v, Real) { return std::cos(v); });
}

Var clamp(const Var& x, Real lo, Real hi) {
  return unary(
      x, [lo, hi](Real v) { return std::clamp(v, lo, hi); },
      [lo, hi](Real v, Real) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Var add_channel_bias(const Var& x, const Var& bias) {
  const int channels = x.dim(0);
  if (bias.value().size() != static_cast<std::size_t>(channels)) {
    throw ValidationError("add_channel_bias: bias size " + std::to_string(bias.value().size()) +
                          " for " + std::to_string(channels) + " channels");
  }
  const std::size_t inner = inner_size(x.value());
  Tensor out = x.value();
  for (int c = 0; c < channels; ++c) {
    const Real b = bias.value()[c];
    Real* row = out.ptr() + c * inner;
    for (std::size_t p = 0; p < inner; ++p) row[p] += b;
  }
  return make_result(std::move(out), {x, bias}, [channels, inner](Node& self) {
    Node& px = parent(self, 0);
    Node& pb = parent(self, 1);
    if (px.requires_grad) px.grad_buffer() += self.grad;
    if (pb.requires_grad) {
      Tensor& g = pb.grad_buffer();
      for (int c = 0; c < channels; ++c) {
        const Real* row = self.grad.ptr() + c * inner;
        Real acc = 0;
        for (std::size_t p = 0; p < inner; ++p) acc += row[p];
        g[c] += acc;
      }
    }
  });
}

Var mul_channel(const Var& x, const Var& factor) {
  const int channels = x.dim(0);
  if (factor.value().size() != static_cast<std::size_t>(channels)) {
    throw ValidationError("mul_channel: factor size mismatch");
  }
  const std::size_t inner = inner_size(x.value());
  Tensor out = x.value();
  for (int c = 0; c < channels; ++c) {
    const Real k = factor.value()[c];
    Real* row = out.ptr() + c * inner;
    for (std::size_t p = 0; p < inner; ++p) row[p] *= k;
  }
  return make_result(std::move(out), {x, factor}, [channels, inner](Node& self) {
    Node& px = parent(self, 0);
    Node& pf = parent(self, 1);
    if (px.requires_grad) {
      Tensor& g = px.grad_buffer();
      for (int c = 0; c < channels; ++c) {
        const Real k = pf.value[c];
        for (std::size_t p = 0; p < inner; ++p) g[c * inner + p] += k * self.grad[c * inner + p];
      }
    }
    if (pf.requires_grad) {
      Tensor& g = pf.grad_buffer();
      for (int c = 0; c < channels; ++c) {
        Real acc = 0;
        for (std::size_t p = 0; p < inner; ++p)
          acc += self.grad[c * inner + p] * px.value[c * inner + p];
        g[c] += acc;
      }
    }
  });
}

Var sum(const Var& x) {
  return make_result(Tensor::scalar(x.value().sum()), {x}, [](Node& self) {
    Tensor& g = parent(self, 0).grad_buffer();
    const Real s = self.grad[0];
    for (Real& v : g.storage()) v += s;
  });
}

Var mean(const Var& x) {
  const Real n = static_cast<Real>(x.value().size());
  return make_result(Tensor::scalar(x.value().sum() / n), {x}, [n](Node& self) {
    Tensor& g = parent(self, 0).grad_buffer();
    const Real s = self.grad[0] / n;
    for (Real& v : g.storage()) v += s;
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make_result(std::move(out), {x}, [](Node& self) {
    Tensor& g = parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Var slice0(const Var& x, int begin, int count) {
  const Tensor& in = x.value();
  if (in.rank() < 1 || begin < 0 || count < 0 || begin + count > in.dim(0)) {
    throw ValidationError("slice0: range [" + std::to_string(begin) + ", " +
                          std::to_string(begin + count) + ") outside " + shape_str(in.shape()));
  }
  const std::size_t inner = inner_size(in);
  Shape shape = in.shape();
  shape[0] = count;
  Tensor out(shape);
  std::copy_n(in.ptr() + begin * inner, count * inner, out.ptr());
  return make_result(std::move(out), {x}, [begin, inner](Node& self) {
    Tensor& g = parent(self, 0).grad_buffer();
    Real* dst = g.ptr() + begin * inner;
    for (std::size_t i = 0; i < self.grad.size(); ++i) dst[i] += self.grad[i];
  });
}

Var concat0(const std::vector<Var>& parts) {
  if (parts.empty()) throw ValidationError("concat0: no inputs");
  Shape shape = parts[0].shape();
  int total = 0;
  for (const Var& p : parts) {
    Shape s = p.shape();
    if (s.size() != shape.size()) throw ValidationError("concat0: rank mismatch");
    for (std::size_t d = 1; d < s.size(); ++d) {
      if (s[d] != shape[d]) {
        throw ValidationError("concat0: shape mismatch " + shape_str(s) + " vs " +
                              shape_str(shape));
      }
    }
    total += s[0];
  }
  shape[0] = total;
  Tensor out(shape);
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    offsets.push_back(offset);
    std::copy(p.value().storage().begin(), p.value().storage().end(), out.ptr() + offset);
    offset += p.value().size();
  }
  return make_result(std::move(out), parts, [offsets](Node& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      Node& p = parent(self, k);
      if (!p.requires_grad) continue;
      Tensor& g = p.grad_buffer();
      const Real* src = self.grad.ptr() + offsets[k];
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += src[i];
    }
  });
}

Var matmul(const Var& a, const Var& b) {
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  if (ta.rank() != 2 || tb.rank() != 2 || ta.dim(1) != tb.dim(0)) {
    throw ValidationError("matmul: incompatible shapes " + shape_str(ta.shape()) + " and " +
                          shape_str(tb.shape()));
  }
  const int m = ta.dim(0), k = ta.dim(1), n = tb.dim(1);
  Tensor out({m, n});
  MapRM(out.ptr(), m, n).noalias() = CMapRM(ta.ptr(), m, k) * CMapRM(tb.ptr(), k, n);
  return make_result(std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    CMapRM g(self.grad.ptr(), m, n);
    if (pa.requires_grad) {
      MapRM(pa.grad_buffer().ptr(), m, k).noalias() += g * CMapRM(pb.value.ptr(), k, n).transpose();
    }
    if (pb.requires_grad) {
      MapRM(pb.grad_buffer().ptr(), k, n).noalias() += CMapRM(pa.value.ptr(), m, k).transpose() * g;
    }
  });
}

Var transpose(const Var& a) {
  const Tensor& t = a.value();
  if (t.rank() != 2) throw ValidationError("transpose: expected rank 2, got " + shape_str(t.shape()));
  const int m = t.dim(0), n = t.dim(1);
  Tensor out({n, m});
  MapRM(out.ptr(), n, m) = CMapRM(t.ptr(), m, n).transpose();
  return make_result(std::move(out), {a}, [m, n](Node& self) {
    MapRM(parent(self, 0).grad_buffer().ptr(), m, n) += CMapRM(self.grad.ptr(), n, m).transpose();
  });
}

Var softmax_rows(const Var& a) {
  const Tensor& t = a.value();
  if (t.rank() != 2) throw ValidationError("softmax_rows: expected rank 2");
  const int m = t.dim(0), n = t.dim(1);
  Tensor out({m, n});
  for (int r = 0; r < m; ++r) {
    const Real* in = t.ptr() + r * n;
    Real* o = out.ptr() + r * n;
    const Real mx = *std::max_element(in, in + n);
    Real z = 0;
    for (int c = 0; c < n; ++c) z += (o[c] = std::exp(in[c] - mx));
    for (int c = 0; c < n; ++c) o[c] /= z;
  }
  return make_result(std::move(out), {a}, [m, n](Node& self) {
    Tensor& g = parent(self, 0).grad_buffer();
    for (int r = 0; r < m; ++r) {
      const Real* y = self.value.ptr() + r * n;
      const Real* dy = self.grad.ptr() + r * n;
      Real dot = 0;
      for (int c = 0; c < n; ++c) dot += y[c] * dy[c];
      for (int c = 0; c < n; ++c) g[r * n + c] += y[c] * (dy[c] - dot);
    }
  });
}

Var softmax_channels(const Var& x) {
  const Tensor& t = x.value();
  if (t.rank() != 3) throw ValidationError("softmax_channels: expected (C,H,W)");
  const int channels = t.dim(0);
  const std::size_t plane = static_cast<std::size_t>(t.dim(1)) * t.dim(2);
  Tensor out = Tensor::zeros_like(t);
  for (std::size_t p = 0; p < plane; ++p) {
    Real mx = t[p];
    for (int c = 1; c < channels; ++c) mx = std::max(mx, t[c * plane + p]);
    Real z = 0;
    for (int c = 0; c < channels; ++c) z += (out[c * plane + p] = std::exp(t[c * plane + p] - mx));
    for (int c = 0; c < channels; ++c) out[c * plane + p] /= z;
  }
  return make_result(std::move(out), {x}, [channels, plane](Node& self) {
    Tensor& g = parent(self, 0).grad_buffer();
    for (std::size_t p = 0; p < plane; ++p) {
      Real dot = 0;
      for (int c = 0; c < channels; ++c) dot += self.value[c * plane + p] * self.grad[c * plane + p];
      for (int c = 0; c < channels; ++c) {
        g[c * plane + p] += self.value[c * plane + p] * (self.grad[c * plane + p] - dot);
      }
    }
  });
}

Var layer_norm_channels(const Var& x, const Var& gamma, const Var& beta, Real eps) {
  const Tensor& t = x.value();
  if (t.rank() != 3) throw ValidationError("layer_norm_channels: expected (C,H,W)");
  const int channels = t.dim(0);
  if (gamma.value().size() != static_cast<std::size_t>(channels) ||
      beta.value().size() != static_cast<std::size_t>(channels)) {
    throw ValidationError("layer_norm_channels: affine parameter size mismatch");
  }
  const std::size_t plane = static_cast<std::size_t>(t.dim(1)) * t.dim(2);
  Tensor normalized = Tensor::zeros_like(t);
  std::vector<Real> inv_std(plane);
  for (std::size_t p = 0; p < plane; ++p) {
    Real mu = 0;
    for (int c = 0; c < channels; ++c) mu += t[c * plane + p];
    mu /= channels;
    Real var = 0;
    for (int c = 0; c < channels; ++c) {
      const Real d = t[c * plane + p] - mu;
      var += d * d;
    }
    var /= channels;
    inv_std[p] = 1.0 / std::sqrt(var + eps);
    for (int c = 0; c < channels; ++c) normalized[c * plane + p] = (t[c * plane + p] - mu) * inv_std[p];
  }
  Tensor out = normalized;
  for (int c = 0; c < channels; ++c) {
    const Real gm = gamma.value()[c], bt = beta.value()[c];
    for (std::size_t p = 0; p < plane; ++p) out[c * plane + p] = gm * out[c * plane + p] + bt;
  }
  return make_result(
      std::move(out), {x, gamma, beta},
      [channels, plane, normalized = std::move(normalized), inv_std = std::move(inv_std)](Node& self) {
        Node& px = parent(self, 0);
        Node& pg = parent(self, 1);
        Node& pb = parent(self, 2);
        if (pg.requires_grad || pb.requires_grad) {
          Tensor& gg = pg.grad_buffer();
          Tensor& gb = pb.grad_buffer();
          for (int c = 0; c < channels; ++c) {
            Real ag = 0, ab = 0;
            for (std::size_t p = 0; p < plane; ++p) {
              ag += self.grad[c * plane + p] * normalized[c * plane + p];
              ab += self.grad[c * plane + p];
            }
            if (pg.requires_grad) gg[c] += ag;
            if (pb.requires_grad) gb[c] += ab;
          }
        }
        if (px.requires_grad) {
          Tensor& g = px.grad_buffer();
          for (std::size_t p = 0; p < plane; ++p) {
            Real mean_d = 0, mean_dx = 0;
            for (int c = 0; c < channels; ++c) {
              const Real d = self.grad[c * plane + p] * pg.value[c];
              mean_d += d;
              mean_dx += d * normalized[c * plane + p];
            }
            mean_d /= channels;
            mean_dx /= channels;
            for (int c = 0; c < channels; ++c) {
              const Real d = self.grad[c * plane + p] * pg.value[c];
              g[c * plane + p] += inv_std[p] * (d - mean_d - normalized[c * plane + p] * mean_dx);
            }
          }
        }
      });
}

Var charbonnier(const Var& a, const Var& b, Real eps) {
  check_same(a, b, "charbonnier");
  if (!(eps > 0)) throw ValidationError("charbonnier: eps must be positive");
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  const std::size_t n = ta.size();
  if (n == 0) throw ValidationError("charbonnier: empty input");
  Real acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Real d = ta[i] - tb[i];
    acc += std::sqrt(d * d + eps * eps);
  }
  return make_result(Tensor::scalar(acc / static_cast<Real>(n)), {a, b}, [n, eps](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    const Real s = self.grad[0] / static_cast<Real>(n);
    Real* ga = pa.requires_grad ? pa.grad_buffer().ptr() : nullptr;
    Real* gb = pb.requires_grad ? pb.grad_buffer().ptr() : nullptr;
    for (std::size_t i = 0; i < n; ++i) {
      const Real d = pa.value[i] - pb.value[i];
      const Real gi = s * d / std::sqrt(d * d + eps * eps);
      if (ga) ga[i] += gi;
      if (gb) gb[i] -= gi;
    }
  });
}

}  // namespace bvsrik
