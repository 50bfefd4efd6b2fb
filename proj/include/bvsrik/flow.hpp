#pragma once

#include <memory>
#include <string>

#include "bvsrik/autograd.hpp"

namespace bvsrik {

/// Dense displacement field, shape (2, H, W): channel 0 is dx (columns),
/// channel 1 is dy (rows), in pixels.
using FlowField = Tensor;

/// Bilinear backward warp: out[c,i,j] samples feature[c] at (i + dy, j + dx),
/// coordinates clamped to the image. Differentiable in feature and flow.
Var warp(const Var& feature, const Var& flow);
Tensor warp(const Tensor& feature, const FlowField& flow);

/// Estimates the flow that aligns `source` onto `target`, i.e.
/// warp(source, estimate(target, source)) ~ target. Inputs are (3, H, W)
/// RGB frames in [0, 1].
class FlowEstimator {
 public:
  virtual ~FlowEstimator() = default;
  virtual FlowField estimate(const Tensor& target, const Tensor& source) const = 0;
  virtual std::string name() const = 0;
};

/// Always returns zero displacement.
class ZeroFlowEstimator final : public FlowEstimator {
 public:
  FlowField estimate(const Tensor& target, const Tensor& source) const override;
  std::string name() const override { return "zero"; }
};

/// Coarse-to-fine dense Lucas-Kanade on luma with iterative re-warping.
/// Needs no learned weights.
class ClassicalFlowEstimator final : public FlowEstimator {
 public:
  struct Options {
    int max_levels = 4;
    int min_size = 8;
    int warps_per_level = 3;
    Real window_sigma = 1.5;
    int window_radius = 2;
    Real ridge = 1e-5;
  };
  ClassicalFlowEstimator() = default;
  explicit ClassicalFlowEstimator(Options options) : options_(options) {}
  FlowField estimate(const Tensor& target, const Tensor& source) const override;
  std::string name() const override { return "classical"; }

 private:
  Options options_;
};

/// "zero" or "classical".
std::shared_ptr<const FlowEstimator> make_flow_estimator(const std::string& name);

}  // namespace bvsrik
