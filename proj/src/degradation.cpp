#include "bvsrik/degradation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <nlohmann/json.hpp>

#include "bvsrik/error.hpp"
#include "bvsrik/hash.hpp"
#include "bvsrik/resize.hpp"

namespace bvsrik {

namespace fs = std::filesystem;

namespace {

void normalize_kernel(Tensor& k) {
  const Real total = k.sum();
  if (!(total > 0)) throw ContractViolation("blur kernel has no mass");
  k *= 1.0 / total;
}

void splat(Tensor& k, Real y, Real x, Real weight) {
  const int size = k.dim(0);
  const int y0 = static_cast<int>(std::floor(y)), x0 = static_cast<int>(std::floor(x));
  const Real fy = y - y0, fx = x - x0;
  const int ys[2] = {y0, y0 + 1};
  const int xs[2] = {x0, x0 + 1};
  const Real wy[2] = {1 - fy, fy};
  const Real wx[2] = {1 - fx, fx};
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      if (ys[a] >= 0 && ys[a] < size && xs[b] >= 0 && xs[b] < size)
        k[static_cast<std::size_t>(ys[a]) * size + xs[b]] += weight * wy[a] * wx[b];
}

}  // namespace

Tensor gaussian_kernel(Real sigma, int size) {
  if (!(sigma > 0)) throw ValidationError("gaussian_kernel: sigma must be positive");
  if (size < 1 || size % 2 == 0) throw ValidationError("gaussian_kernel: size must be odd and positive");
  const int c = size / 2;
  Tensor k({size, size});
  for (int x = 0; x < size; ++x)
    for (int y = 0; y < size; ++y)
      k[static_cast<std::size_t>(x) * size + y] =
          std::exp(-((x - c) * (x - c) + (y - c) * (y - c)) / (2 * sigma * sigma));
  normalize_kernel(k);
  return k;
}

Tensor motion_kernel(std::uint64_t seed, int size) {
  if (size < 3 || size % 2 == 0) throw ValidationError("motion_kernel: size must be odd and >= 3");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Real> uni(0.0, 1.0);
  std::normal_distribution<Real> gauss(0.0, 1.0);

  const int steps = 48;
  const Real inertia = 0.55 + 0.35 * uni(rng);
  const Real impulse_prob = 0.08;
  const Real half = 0.5 * (size - 1) - 0.5;
  const Real length = 2.0 + uni(rng) * (2 * half - 2.0);  // jittered path length

  const Real angle = 2 * std::numbers::pi * uni(rng);
  Real vx = std::cos(angle), vy = std::sin(angle);
  std::vector<Real> px{0}, py{0};
  for (int s = 1; s < steps; ++s) {
    Real nx = 0.6 * gauss(rng), ny = 0.6 * gauss(rng);
    if (uni(rng) < impulse_prob) {
      nx += 2.5 * gauss(rng);
      ny += 2.5 * gauss(rng);
    }
    vx = inertia * vx + (1 - inertia) * nx;
    vy = inertia * vy + (1 - inertia) * ny;
    px.push_back(px.back() + vx);
    py.push_back(py.back() + vy);
  }

  Real arc = 0;
  for (int s = 1; s < steps; ++s) arc += std::hypot(px[s] - px[s - 1], py[s] - py[s - 1]);
  const Real stretch = arc > 1e-9 ? length / arc : 0.0;
  for (int s = 0; s < steps; ++s) {
    px[s] *= stretch;
    py[s] *= stretch;
  }
  const auto [xmin, xmax] = std::minmax_element(px.begin(), px.end());
  const auto [ymin, ymax] = std::minmax_element(py.begin(), py.end());
  const Real cx = 0.5 * (*xmin + *xmax), cy = 0.5 * (*ymin + *ymax);
  const Real extent = std::max(*xmax - *xmin, *ymax - *ymin) * 0.5;
  const Real shrink = extent > half ? half / extent : 1.0;

  const Real center = size / 2;
  Tensor raw({size, size});
  for (int s = 1; s < steps; ++s) {
    const Real x0 = (px[s - 1] - cx) * shrink, y0 = (py[s - 1] - cy) * shrink;
    const Real x1 = (px[s] - cx) * shrink, y1 = (py[s] - cy) * shrink;
    const int pieces = std::max(1, static_cast<int>(std::ceil(4 * std::hypot(x1 - x0, y1 - y0))));
    for (int q = 0; q < pieces; ++q) {
      const Real u = (q + 0.5) / pieces;
      splat(raw, center + y0 + u * (y1 - y0), center + x0 + u * (x1 - x0), 1.0 / pieces);
    }
  }
  if (raw.sum() <= 0) splat(raw, center, center, 1.0);

  // Light 3x3 smoothing keeps thin trajectories from aliasing.
  const Real taps[3] = {0.25, 0.5, 0.25};
  Tensor k({size, size});
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) {
      Real acc = 0;
      for (int a = -1; a <= 1; ++a)
        for (int b = -1; b <= 1; ++b) {
          const int ii = i + a, jj = j + b;
          if (ii < 0 || ii >= size || jj < 0 || jj >= size) continue;
          acc += taps[a + 1] * taps[b + 1] * raw[static_cast<std::size_t>(ii) * size + jj];
        }
      k[static_cast<std::size_t>(i) * size + j] = acc;
    }
  normalize_kernel(k);
  return k;
}

Tensor blur(const Tensor& image, const Tensor& kernel) {
  if (image.rank() != 3) throw ValidationError("blur: expected (C,H,W), got " + shape_str(image.shape()));
  if (kernel.rank() != 2 || kernel.dim(0) != kernel.dim(1) || kernel.dim(0) % 2 == 0) {
    throw ValidationError("blur: kernel must be odd and square, got " + shape_str(kernel.shape()));
  }
  const int channels = image.dim(0), h = image.dim(1), w = image.dim(2);
  const int size = kernel.dim(0), half = size / 2;
  Tensor out(image.shape());
  for (int c = 0; c < channels; ++c)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        Real acc = 0;
        for (int a = 0; a < size; ++a) {
          const int ii = std::clamp(i - (a - half), 0, h - 1);
          for (int b = 0; b < size; ++b) {
            const int jj = std::clamp(j - (b - half), 0, w - 1);
            acc += kernel[static_cast<std::size_t>(a) * size + b] * image.at(c, ii, jj);
          }
        }
        out.at(c, i, j) = acc;
      }
  return out;
}

Tensor degrade_frame(const Tensor& gt, const Tensor& kernel, int scale) {
  if (gt.rank() != 3) throw ValidationError("degrade_frame: expected (C,H,W), got " + shape_str(gt.shape()));
  if (scale < 1 || gt.dim(1) % scale != 0 || gt.dim(2) % scale != 0) {
    throw ValidationError("degrade_frame: " + shape_str(gt.shape()) + " not divisible by scale " +
                          std::to_string(scale));
  }
  return bicubic_resize(blur(gt, kernel), gt.dim(1) / scale, gt.dim(2) / scale);
}

Scenario parse_scenario(const std::string& name) {
  if (name == "gaussian") return Scenario::gaussian;
  if (name == "motion") return Scenario::motion;
  throw ValidationError("unknown scenario '" + name + "' (expected gaussian|motion)");
}

std::string scenario_name(Scenario scenario) {
  return scenario == Scenario::gaussian ? "gaussian" : "motion";
}

ClipTriplet make_triplet(const std::vector<Tensor>& gt_clip, Scenario scenario, std::uint64_t seed,
                         Real noise_sigma, int scale) {
  if (gt_clip.empty()) throw ValidationError("make_triplet: empty clip");
  if (noise_sigma < 0) throw ValidationError("make_triplet: noise sigma must be >= 0");
  ClipTriplet out;
  out.scenario = scenario;
  out.seed = seed;
  out.noise_sigma = noise_sigma;
  std::mt19937_64 rng(seed);
  std::mt19937_64 noise_rng(seed ^ 0x5851f42d4c957f2dULL);
  std::uniform_real_distribution<Real> sigma_dist(0.4, 2.0);
  std::normal_distribution<Real> noise(0.0, noise_sigma / 255.0);
  for (const Tensor& gt : gt_clip) {
    Tensor kernel;
    if (scenario == Scenario::gaussian) {
      const Real sigma = sigma_dist(rng);
      out.sigmas.push_back(sigma);
      kernel = gaussian_kernel(sigma);
    } else {
      const std::uint64_t kseed = rng();
      out.kernel_seeds.push_back(kseed);
      kernel = motion_kernel(kseed);
    }
    Tensor lr = degrade_frame(gt, kernel, scale);
    if (noise_sigma > 0) {
      for (Real& v : lr.storage()) v = std::clamp(v + noise(noise_rng), 0.0, 1.0);
    }
    out.gt.push_back(gt);
    out.lr.push_back(std::move(lr));
    out.dn.push_back(bicubic_resize(gt, gt.dim(1) / scale, gt.dim(2) / scale));
    out.kernels.push_back(std::move(kernel));
  }
  return out;
}

std::uint64_t tensor_checksum(const Tensor& t) {
  return fnv1a64(t.ptr(), t.size() * sizeof(Real));
}

void write_triplet(const ClipTriplet& triplet, const fs::path& root) {
  save_sequence(triplet.lr, root / "lr");
  save_sequence(triplet.dn, root / "dn");
  save_sequence(triplet.gt, root / "gt");
  nlohmann::ordered_json manifest;
  manifest["schema_version"] = 1;
  manifest["scenario"] = scenario_name(triplet.scenario);
  manifest["seed"] = triplet.seed;
  manifest["noise_sigma"] = triplet.noise_sigma;
  manifest["kernel_size"] = kBlurKernelSize;
  auto frames = nlohmann::ordered_json::array();
  for (std::size_t t = 0; t < triplet.kernels.size(); ++t) {
    nlohmann::ordered_json f;
    f["index"] = t;
    if (t < triplet.sigmas.size()) f["sigma"] = triplet.sigmas[t];
    if (t < triplet.kernel_seeds.size()) f["kernel_seed"] = triplet.kernel_seeds[t];
    f["kernel_checksum"] = fingerprint_hex(tensor_checksum(triplet.kernels[t]));
    frames.push_back(std::move(f));
  }
  manifest["frames"] = std::move(frames);
  std::ofstream os(root / "manifest.json");
  if (!os) throw IoError("cannot write " + (root / "manifest.json").string());
  os << manifest.dump(2) << '\n';
}

ClipTriplet read_triplet(const fs::path& root) {
  ClipTriplet out;
  out.lr = load_sequence(root / "lr");
  out.dn = load_sequence(root / "dn");
  out.gt = load_sequence(root / "gt");
  if (out.lr.size() != out.dn.size() || out.lr.size() != out.gt.size()) {
    throw IoError("triplet " + root.string() + ": lr/dn/gt frame counts differ");
  }
  const fs::path manifest_path = root / "manifest.json";
  if (fs::exists(manifest_path)) {
    std::ifstream is(manifest_path);
    try {
      const auto manifest = nlohmann::json::parse(is);
      out.scenario = parse_scenario(manifest.at("scenario").get<std::string>());
      out.seed = manifest.at("seed").get<std::uint64_t>();
      out.noise_sigma = manifest.value("noise_sigma", 0.0);
    } catch (const nlohmann::json::exception& e) {
      throw IoError("bad manifest " + manifest_path.string() + ": " + e.what());
    }
  }
  return out;
}

std::vector<Tensor> synthetic_clip(int frames, int height, int width, std::uint64_t seed) {
  if (frames < 1 || height < 1 || width < 1) throw ValidationError("synthetic_clip: sizes must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Real> uni(0.0, 1.0);
  auto range = [&](Real lo, Real hi) { return lo + (hi - lo) * uni(rng); };

  struct Grating {
    Real fx, fy, phase, amp;
    Real color[3];
  };
  struct Shape {
    Real cy, cx, radius, vy, vx;
    bool square;
    Real color[3];
  };
  std::vector<Grating> gratings(4);
  for (Grating& g : gratings) {
    const Real freq = range(0.02, 0.12), dir = range(0, std::numbers::pi);
    g = {freq * std::cos(dir), freq * std::sin(dir), range(0, 2 * std::numbers::pi), range(0.05, 0.15), {}};
    for (Real& c : g.color) c = range(0.3, 1.0);
  }
  std::vector<Shape> shapes(6);
  for (Shape& s : shapes) {
    s = {range(0, height), range(0, width), range(0.06, 0.18) * std::min(height, width),
         range(-1.5, 1.5), range(-1.5, 1.5), uni(rng) < 0.5, {}};
    for (Real& c : s.color) c = range(0.05, 0.95);
  }
  const Real pan_y = range(-1.0, 1.0), pan_x = range(-1.0, 1.0);
  Real base[3];
  for (Real& c : base) c = range(0.3, 0.6);

  std::vector<Tensor> clip;
  const int ss = 2;  // supersampling per axis
  for (int t = 0; t < frames; ++t) {
    Tensor frame({3, height, width});
    for (int i = 0; i < height; ++i)
      for (int j = 0; j < width; ++j) {
        Real rgb[3] = {0, 0, 0};
        for (int a = 0; a < ss; ++a)
          for (int b = 0; b < ss; ++b) {
            const Real y = i + (a + 0.5) / ss - 0.5, x = j + (b + 0.5) / ss - 0.5;
            Real v[3] = {base[0], base[1], base[2]};
            const Real by = y - pan_y * t, bx = x - pan_x * t;
            for (const Grating& g : gratings) {
              const Real s = g.amp * std::sin(2 * std::numbers::pi * (g.fx * bx + g.fy * by) + g.phase);
              for (int c = 0; c < 3; ++c) v[c] += s * g.color[c];
            }
            for (const Shape& s : shapes) {
              const Real dy = y - (s.cy + s.vy * t), dx = x - (s.cx + s.vx * t);
              const bool inside = s.square ? std::max(std::abs(dy), std::abs(dx)) < s.radius
                                           : dy * dy + dx * dx < s.radius * s.radius;
              if (inside)
                for (int c = 0; c < 3; ++c) v[c] = s.color[c];
            }
            for (int c = 0; c < 3; ++c) rgb[c] += v[c];
          }
        for (int c = 0; c < 3; ++c) frame.at(c, i, j) = std::clamp(rgb[c] / (ss * ss), 0.0, 1.0);
      }
    clip.push_back(std::move(frame));
  }
  return clip;
}

}  // namespace bvsrik
