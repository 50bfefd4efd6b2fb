#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bvsrik/tensor.hpp"

namespace bvsrik {

inline constexpr int kBlurKernelSize = 13;

/// Isotropic Gaussian on a size x size grid centered at size/2, sum 1.
/// Stored as a (size, size) tensor.
Tensor gaussian_kernel(Real sigma, int size = kBlurKernelSize);

/// Camera-shake kernel from a random velocity walk with inertia, sparse
/// impulses and length jitter, splatted bilinearly onto the grid, smoothed
/// slightly and normalized to sum 1. Deterministic per seed.
Tensor motion_kernel(std::uint64_t seed, int size = kBlurKernelSize);

/// Per-channel true convolution of a (C, H, W) image with an odd square
/// kernel, replicate borders.
Tensor blur(const Tensor& image, const Tensor& kernel);

/// blur, then bicubic downsample by `scale`.
Tensor degrade_frame(const Tensor& gt, const Tensor& kernel, int scale = 4);

enum class Scenario { gaussian, motion };
Scenario parse_scenario(const std::string& name);
std::string scenario_name(Scenario scenario);

struct ClipTriplet {
  std::vector<Tensor> gt;  // (3, sH, sW)
  std::vector<Tensor> lr;  // (3, H, W), blurred and downsampled
  std::vector<Tensor> dn;  // (3, H, W), clean downsample
  std::vector<Tensor> kernels;
  std::vector<Real> sigmas;  // per frame; gaussian scenario only
  std::vector<std::uint64_t> kernel_seeds;  // per frame; motion scenario only
  Scenario scenario = Scenario::gaussian;
  std::uint64_t seed = 0;
  Real noise_sigma = 0;  // on the 0..255 scale
};

/// Gaussian sigmas are drawn uniformly from [0.4, 2.0]. Noise, when
/// requested, is added to lr only and clipped to [0, 1].
ClipTriplet make_triplet(const std::vector<Tensor>& gt_clip, Scenario scenario, std::uint64_t seed,
                         Real noise_sigma = 0, int scale = 4);

/// Reads every file of `dir` in lexicographic order as an 8-bit RGB PNG.
std::vector<Tensor> load_sequence(const std::filesystem::path& dir);
/// Writes frames as 00000000.png, 00000001.png, ... (8-bit, rounded).
void save_sequence(const std::vector<Tensor>& frames, const std::filesystem::path& dir);

Tensor load_png(const std::filesystem::path& file);
void save_png(const Tensor& image, const std::filesystem::path& file);
/// (1, H, W) or (H, W) values in [0, 1] as an 8-bit grayscale PNG.
void save_gray_png(const Tensor& image, const std::filesystem::path& file);

/// Writes lr/, dn/, gt/ and manifest.json under root.
void write_triplet(const ClipTriplet& triplet, const std::filesystem::path& root);
/// Reads lr/, dn/ and gt/ back; kernels and seeds are not restored.
ClipTriplet read_triplet(const std::filesystem::path& root);

std::uint64_t tensor_checksum(const Tensor& t);

/// Procedural ground-truth clip: textured layers translating with
/// sub-pixel motion, values in [0, 1].
std::vector<Tensor> synthetic_clip(int frames, int height, int width, std::uint64_t seed);

}  // namespace bvsrik
