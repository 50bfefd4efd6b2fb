#include "bvsrik/nn.hpp"

#include <cmath>

#include "bvsrik/error.hpp"
#include "bvsrik/ops.hpp"

namespace bvsrik {

Tensor uniform_tensor(Shape shape, Real lo, Real hi, Rng& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<Real> dist(lo, hi);
  for (Real& v : t.storage()) v = dist(rng);
  return t;
}

Var ParameterStore::add(const std::string& name, Tensor init, std::optional<Real> lower_bound) {
  if (index_.count(name)) throw ValidationError("duplicate parameter name '" + name + "'");
  Var v = Var::parameter(std::move(init));
  index_[name] = entries_.size();
  entries_.push_back({name, v, lower_bound});
  return v;
}

void ParameterStore::adopt(const std::string& name, Var var, std::optional<Real> lower_bound) {
  if (index_.count(name)) throw ValidationError("duplicate parameter name '" + name + "'");
  var.node()->requires_grad = true;
  index_[name] = entries_.size();
  entries_.push_back({name, std::move(var), lower_bound});
}

const Var& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValidationError("unknown parameter '" + name + "'");
  return entries_[it->second].var;
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const Entry& e : entries_) n += e.var.value().size();
  return n;
}

void ParameterStore::zero_grad() {
  for (Entry& e : entries_) e.var.zero_grad();
}

Conv2d::Conv2d(ParameterStore& store, const std::string& name, int in_channels, int out_channels,
               int kernel, Rng& rng, int stride_, Real init_scale, bool with_bias)
    : stride(stride_), pad(kernel / 2) {
  const Real bound = 1.0 / std::sqrt(static_cast<Real>(in_channels * kernel * kernel));
  weight = store.add(name + ".weight",
                     uniform_tensor({out_channels, in_channels, kernel, kernel}, -bound, bound, rng) *
                         init_scale);
  if (with_bias)
    bias = store.add(name + ".bias", uniform_tensor({out_channels}, -bound, bound, rng) * init_scale);
}

Var Conv2d::operator()(const Var& x) const { return conv2d(x, weight, bias, stride, pad); }

DepthwiseConv2d::DepthwiseConv2d(ParameterStore& store, const std::string& name, int channels,
                                 int kernel, Rng& rng)
    : pad(kernel / 2) {
  const Real bound = 1.0 / static_cast<Real>(kernel);
  weight = store.add(name + ".weight", uniform_tensor({channels, kernel, kernel}, -bound, bound, rng));
  bias = store.add(name + ".bias", uniform_tensor({channels}, -bound, bound, rng));
}

Var DepthwiseConv2d::operator()(const Var& x) const { return depthwise_conv2d(x, weight, bias, pad); }

ChannelAffine::ChannelAffine(ParameterStore& store, const std::string& name, int channels) {
  scale = store.add(name + ".scale", Tensor({channels}, 1.0));
  shift = store.add(name + ".shift", Tensor({channels}, 0.0));
}

Var ChannelAffine::operator()(const Var& x) const { return add_channel_bias(mul_channel(x, scale), shift); }

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, int channels) {
  gamma = store.add(name + ".gamma", Tensor({channels}, 1.0));
  beta = store.add(name + ".beta", Tensor({channels}, 0.0));
}

Var LayerNorm::operator()(const Var& x) const { return layer_norm_channels(x, gamma, beta); }

ResidualBlock::ResidualBlock(ParameterStore& store, const std::string& name, int channels, Rng& rng)
    : conv1(store, name + ".conv1", channels, channels, 3, rng),
      conv2(store, name + ".conv2", channels, channels, 3, rng, 1, 0.1) {}

Var ResidualBlock::operator()(const Var& x) const { return add(x, conv2(relu(conv1(x)))); }

TransposedConv2x::TransposedConv2x(ParameterStore& store, const std::string& name, int in_channels,
                                   int out_channels, Rng& rng)
    : expand(store, name, in_channels, 4 * out_channels, 1, rng) {}

Var TransposedConv2x::operator()(const Var& x) const { return pixel_shuffle(expand(x), 2); }

Var zeros_var(const Shape& shape) { return Var::constant(Tensor(shape)); }

}  // namespace bvsrik
