#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "bvsrik/autograd.hpp"

namespace bvsrik {

using Rng = std::mt19937_64;

Tensor uniform_tensor(Shape shape, Real lo, Real hi, Rng& rng);

/// Named, ordered collection of trainable leaves. Names are hierarchical
/// ("srt.enc1.roa.qkv_feature.weight") and stable across runs.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Var var;
    std::optional<Real> lower_bound;  // re-projected after each optimizer step
  };

  Var add(const std::string& name, Tensor init, std::optional<Real> lower_bound = std::nullopt);
  /// Registers an existing leaf under a name (it becomes trainable).
  void adopt(const std::string& name, Var var, std::optional<Real> lower_bound = std::nullopt);

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  const Var& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t parameter_count() const;
  void zero_grad();

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Zero-padded 2-D convolution, optional bias; PyTorch-style uniform init.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParameterStore& store, const std::string& name, int in_channels, int out_channels,
         int kernel, Rng& rng, int stride = 1, Real init_scale = 1.0, bool with_bias = true);
  Var operator()(const Var& x) const;

  Var weight;
  Var bias;  // undefined when constructed without bias
  int stride = 1;
  int pad = 0;
};

class DepthwiseConv2d {
 public:
  DepthwiseConv2d() = default;
  DepthwiseConv2d(ParameterStore& store, const std::string& name, int channels, int kernel, Rng& rng);
  Var operator()(const Var& x) const;

  Var weight;
  Var bias;
  int pad = 0;
};

/// 1x1 depth-wise convolution: per-channel scale and shift.
class ChannelAffine {
 public:
  ChannelAffine() = default;
  ChannelAffine(ParameterStore& store, const std::string& name, int channels);
  Var operator()(const Var& x) const;

  Var scale;
  Var shift;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, int channels);
  Var operator()(const Var& x) const;

  Var gamma;
  Var beta;
};

/// conv3x3 -> ReLU -> conv3x3, plus identity skip.
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(ParameterStore& store, const std::string& name, int channels, Rng& rng);
  Var operator()(const Var& x) const;

  Conv2d conv1;
  Conv2d conv2;
};

/// Learnable 2x upsampling (transposed convolution, kernel 2, stride 2),
/// realized as a 1x1 convolution to 4C channels followed by a pixel shuffle.
class TransposedConv2x {
 public:
  TransposedConv2x() = default;
  TransposedConv2x(ParameterStore& store, const std::string& name, int in_channels,
                   int out_channels, Rng& rng);
  Var operator()(const Var& x) const;

  Conv2d expand;
};

Var zeros_var(const Shape& shape);

}  // namespace bvsrik
