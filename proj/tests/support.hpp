#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "bvsrik/autograd.hpp"
#include "bvsrik/nn.hpp"
#include "bvsrik/ops.hpp"
#include "bvsrik/varying_filter.hpp"

namespace testing_support {

using bvsrik::Real;
using bvsrik::Tensor;
using bvsrik::Var;

inline Tensor random_tensor(bvsrik::Shape shape, std::uint64_t seed, Real lo = -1, Real hi = 1) {
  bvsrik::Rng rng(seed);
  return bvsrik::uniform_tensor(std::move(shape), lo, hi, rng);
}

/// Per-pixel probability vectors over axis 0, computed without library ops.
inline Tensor random_simplex(int channels, int h, int w, std::uint64_t seed) {
  Tensor logits = random_tensor({channels, h, w}, seed, -2, 2);
  Tensor out(logits.shape());
  const int plane = h * w;
  for (int p = 0; p < plane; ++p) {
    Real total = 0;
    for (int c = 0; c < channels; ++c) total += std::exp(logits[c * plane + p]);
    for (int c = 0; c < channels; ++c) out[c * plane + p] = std::exp(logits[c * plane + p]) / total;
  }
  return out;
}

inline Real relative_error(Real a, Real b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-10});
}

struct GradCheck {
  Real worst = 0;
  int checked = 0;
};

/// Compares the analytic gradient of a scalar loss with central differences
/// (step 1e-4) at up to `probes` entries of `param`. Entries where both
/// gradients are below `floor` are skipped as uninformative.
inline GradCheck check_gradient(Var param, const std::function<Var()>& loss, int probes = 12, Real floor = 1e-7) {
  param.zero_grad();
  bvsrik::backward(loss());
  const Tensor analytic = param.grad();
  GradCheck result;
  const std::size_t n = param.value().size();
  const std::size_t stride = std::max<std::size_t>(1, n / static_cast<std::size_t>(probes));
  for (std::size_t i = 0; i < n; i += stride) {
    Tensor& v = param.mutable_value();
    const Real saved = v[i];
    v[i] = saved + 1e-4;
    const Real up = loss().value().item();
    v[i] = saved - 1e-4;
    const Real down = loss().value().item();
    v[i] = saved;
    const Real numeric = (up - down) / 2e-4;
    if (std::abs(numeric) < floor && std::abs(analytic[i]) < floor) continue;
    result.worst = std::max(result.worst, relative_error(analytic[i], numeric));
    ++result.checked;
  }
  return result;
}

/// Fresh, empty scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("bvsrik_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing_support
