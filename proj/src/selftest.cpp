#include "bvsrik/selftest.hpp"

#include <cmath>
#include <cstdio>
#include <functional>

#include "bvsrik/degradation.hpp"
#include "bvsrik/error.hpp"
#include "bvsrik/kernel_dictionary.hpp"
#include "bvsrik/metrics.hpp"
#include "bvsrik/model.hpp"
#include "bvsrik/nn.hpp"
#include "bvsrik/ops.hpp"
#include "bvsrik/varying_filter.hpp"

namespace bvsrik {

namespace {

CoefficientField random_coefficients(int atoms, int scales, int h, int w, Rng& rng) {
  CoefficientField c;
  c.omega = Var::parameter(uniform_tensor({atoms, h, w}, -1, 1, rng));
  c.mu = softmax_channels(Var::constant(uniform_tensor({scales, h, w}, -2, 2, rng)));
  return c;
}

Real oracle_suite() {
  Rng rng(101);
  Real worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const int h = 4 + trial % 9, w = 5 + trial % 7, scales = 1 + trial % 3, atoms = 1 + trial % 4;
    const MultiScaleDictionary dict = build_dictionary(init_atoms(atoms, 2, 16, 1000 + trial), scales);
    const CoefficientField coeff = random_coefficients(atoms, scales, h, w, rng);
    const Tensor x = uniform_tensor({2, h, w}, 0, 1, rng);
    const Tensor fast = filter(Var::constant(x), dict, coeff).value();
    const Tensor slow = brute_force_filter(x, dict, coeff);
    worst = std::max(worst, max_abs_diff(fast, slow) / (slow.max_abs() + 1e-8));
  }
  return worst;
}

Real relative_error(Real a, Real b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

// Worst relative error between analytic and central-difference gradients of
// loss() with respect to a few entries of `param`.
Real fd_check(Var& param, const std::function<Var()>& loss, int probes) {
  param.zero_grad();
  backward(loss());
  const Tensor analytic = param.grad();
  Real worst = 0;
  const std::size_t stride = std::max<std::size_t>(1, param.value().size() / probes);
  for (std::size_t i = 0; i < param.value().size(); i += stride) {
    Tensor& v = param.mutable_value();
    const Real saved = v[i];
    v[i] = saved + 1e-4;
    const Real up = loss().value().item();
    v[i] = saved - 1e-4;
    const Real down = loss().value().item();
    v[i] = saved;
    const Real numeric = (up - down) / 2e-4;
    if (std::abs(numeric) < 1e-6 && std::abs(analytic[i]) < 1e-6) continue;
    worst = std::max(worst, relative_error(analytic[i], numeric));
  }
  return worst;
}

Real gradient_suite() {
  Rng rng(202);
  std::vector<InrAtom> atoms = init_atoms(2, 2, 16, 7, 8);
  Real worst = fd_check(atoms[0].w1, [&] { return sum(sine(render_atom(atoms[0], 5))); }, 8);
  worst = std::max(worst, fd_check(atoms[1].frequency, [&] { return sum(sine(render_atom(atoms[1], 3))); }, 1));

  const MultiScaleDictionary dict = build_dictionary(atoms, 2);
  CoefficientField coeff = random_coefficients(2, 2, 5, 4, rng);
  Var input = Var::parameter(uniform_tensor({2, 5, 4}, 0, 1, rng));
  auto loss = [&] { return sum(mul(filter(input, dict, coeff), filter(input, dict, coeff))); };
  worst = std::max(worst, fd_check(coeff.omega, loss, 10));
  worst = std::max(worst, fd_check(input, loss, 10));
  return worst;
}

Real identity_suite() {
  Rng rng(303);
  const int h = 9, w = 7, atoms = 3, scales = 3;
  const MultiScaleDictionary dict = build_dictionary(init_atoms(atoms, 2, 16, 3), scales);
  Tensor omega({atoms, h, w}), mu({scales, h, w});
  for (int p = 0; p < h * w; ++p) {
    omega[p] = 1;
    mu[p] = 1;
  }
  const CoefficientField coeff{Var::constant(omega), Var::constant(mu)};
  const Tensor x = uniform_tensor({3, h, w}, 0, 1, rng);
  return max_abs_diff(filter(Var::constant(x), dict, coeff).value(), x);
}

bool metric_suite() {
  Rng rng(404);
  const Tensor a = uniform_tensor({3, 16, 16}, 0, 1, rng);
  Tensor gray({3, 16, 16}, 0.4), lifted({3, 16, 16}, 0.5);
  std::vector<Tensor> clip{a, a, a};
  const bool cap = psnr_y(a, a) == kPsnrCap;
  const bool offset = std::abs(psnr_y(gray, lifted) - 20.0) < 1e-6;
  const bool ssim_one = ssim_y(a, a) == 1.0;
  const bool tof_zero = tof(clip, clip, ZeroFlowEstimator()) == 0.0;
  return cap && offset && ssim_one && tof_zero;
}

void dump_atoms(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const ModelConfig config = ModelConfig::full();
  const MultiScaleDictionary dict =
      build_dictionary(init_atoms(config.atoms, config.freq_low, config.freq_high, 0), config.scales);
  const int zoom = 8;
  for (int r = 1; r <= dict.scale_count(); ++r) {
    const int size = dict.kernel_size(r), n = dict.atom_count();
    Tensor sheet({1, size * zoom, (size * zoom + 2) * n}, 1.0);
    for (int a = 1; a <= n; ++a) {
      const Tensor g = dict.grid(r, a);
      Real lo = g.storage().front(), hi = lo;
      for (Real v : g.storage()) lo = std::min(lo, v), hi = std::max(hi, v);
      for (int i = 0; i < size * zoom; ++i)
        for (int j = 0; j < size * zoom; ++j) {
          const Real v = g[static_cast<std::size_t>(i / zoom) * size + j / zoom];
          sheet.at(0, i, (a - 1) * (size * zoom + 2) + j) = hi > lo ? (v - lo) / (hi - lo) : 0.5;
        }
    }
    char name[32];
    std::snprintf(name, sizeof name, "atoms_scale%d.png", r);
    save_gray_png(sheet, dir / name);
  }
}

}  // namespace

int run_selftest(std::ostream& out, const std::filesystem::path& dump_dir) {
  int failures = 0;
  auto report = [&](const char* suite, bool pass, const std::string& detail) {
    out << (pass ? "PASS " : "FAIL ") << suite << "  " << detail << '\n';
    if (!pass) ++failures;
  };
  auto guarded = [&](const char* suite, const std::function<void()>& body) {
    try {
      body();
    } catch (const std::exception& e) {
      report(suite, false, std::string("exception: ") + e.what());
    }
  };
  char buf[96];
  guarded("oracle", [&] {
    const Real e = oracle_suite();
    std::snprintf(buf, sizeof buf, "max relative deviation %.3g (limit 1e-5)", e);
    report("oracle", e < 1e-5, buf);
  });
  guarded("gradient", [&] {
    const Real e = gradient_suite();
    std::snprintf(buf, sizeof buf, "max relative error %.3g (limit 1e-4)", e);
    report("gradient", e < 1e-4, buf);
  });
  guarded("delta_identity", [&] {
    const Real e = identity_suite();
    std::snprintf(buf, sizeof buf, "max abs deviation %.3g (limit 1e-7)", e);
    report("delta_identity", e <= 1e-7, buf);
  });
  guarded("metrics", [&] { report("metrics", metric_suite(), "psnr cap, 20 dB offset, ssim(a,a), tof(gt,gt)"); });

  const std::size_t desk = BvsrIkModel(ModelConfig::desk()).parameters().parameter_count();
  const std::size_t full = BvsrIkModel(ModelConfig::full()).parameters().parameter_count();
  std::snprintf(buf, sizeof buf, "parameters: desk %zu, full %zu (%.2fM; reference %.2fM)", desk, full,
                full / 1e6, kReferenceParamsMillions);
  out << buf << '\n';

  if (!dump_dir.empty()) {
    dump_atoms(dump_dir);
    out << "atom renders written to " << dump_dir.string() << '\n';
  }
  return failures;
}

}  // namespace bvsrik
