#include "bvsrik/recurrent_transformer.hpp"

#include "bvsrik/error.hpp"
#include "bvsrik/ops.hpp"

namespace bvsrik {

RoaParams::RoaParams(ParameterStore& store, const std::string& name, int channels, Real alpha_init, Rng& rng)
    : qkv_feature(store, name + ".qkv_feature", channels, 3 * channels, 3, rng, 1, 1.0, false),
      qkv_hidden(store, name + ".qkv_hidden", channels, 3 * channels, 3, rng, 1, 1.0, false),
      output(store, name + ".output", channels) {
  alpha = store.add(name + ".alpha", Tensor::scalar(alpha_init), Real{1e-3});
}

Var roa(const Var& feature, const Var& hidden, const RoaParams& params) {
  if (feature.shape() != hidden.shape() || feature.value().rank() != 3) {
    throw ValidationError("roa: feature " + shape_str(feature.shape()) + " and hidden " +
                          shape_str(hidden.shape()) + " must share a (C,H,W) shape");
  }
  const int c = feature.dim(0), h = feature.dim(1), w = feature.dim(2);
  const Var qkv = add(params.qkv_feature(feature), params.qkv_hidden(hidden));
  const Var q = reshape(slice0(qkv, 0, c), {c, h * w});
  const Var k = reshape(slice0(qkv, c, c), {c, h * w});
  const Var v = reshape(slice0(qkv, 2 * c, c), {c, h * w});
  const Var attn = softmax_rows(div_scalar(matmul(q, transpose(k)), params.alpha));
  const Var mixed = reshape(matmul(attn, v), {c, h, w});
  return params.output(mixed);
}

FeedForward::FeedForward(ParameterStore& store, const std::string& name, int channels, Rng& rng)
    : project_in(store, name + ".project_in", channels, 4 * channels, 1, rng),
      gate_dw(store, name + ".gate_dw", 4 * channels, 3, rng),
      project_out(store, name + ".project_out", 2 * channels, channels, 1, rng) {}

Var FeedForward::operator()(const Var& x) const {
  const Var expanded = gate_dw(project_in(x));
  const int hidden = expanded.dim(0) / 2;
  const Var gated = mul(gelu(slice0(expanded, 0, hidden)), slice0(expanded, hidden, hidden));
  return project_out(gated);
}

RtBlock::RtBlock(ParameterStore& store, const std::string& name, int channels, BlockKind kind_,
                 Real alpha_init, Rng& rng)
    : kind(kind_),
      norm_feature(store, name + ".norm_feature", channels),
      norm_hidden(store, name + ".norm_hidden", channels),
      norm_ffn(store, name + ".norm_ffn", channels),
      attention(store, name + ".roa", channels, alpha_init, rng),
      ffn(store, name + ".ffn", channels, rng),
      hidden_update(store, name + ".hidden_update", channels, channels, 3, rng) {}

std::pair<Var, Var> RtBlock::operator()(const Var& feature, const Var& short_hidden,
                                        const std::optional<Var>& long_hidden) const {
  if (feature.shape() != short_hidden.shape()) {
    throw ValidationError("rt_block: feature " + shape_str(feature.shape()) + " vs hidden " +
                          shape_str(short_hidden.shape()));
  }
  Var mix = short_hidden;
  if (long_hidden) {
    if (kind == BlockKind::encoder) {
      throw ContractViolation("rt_block: encoder blocks take no long-term hidden state");
    }
    if (long_hidden->shape() != feature.shape()) {
      throw ValidationError("rt_block: long-term hidden " + shape_str(long_hidden->shape()) +
                            " vs feature " + shape_str(feature.shape()));
    }
    mix = add(mix, *long_hidden);
  }
  const Var a = roa(norm_feature(feature), norm_hidden(mix), attention);
  const Var out = add(feature, ffn(norm_ffn(add(feature, a))));
  return {out, hidden_update(a)};
}

RecurrentTransformer::RecurrentTransformer(ParameterStore& store, const std::string& name,
                                           const RtConfig& config, Rng& rng)
    : config_(config) {
  const int c = config.channels;
  for (int s = 0; s < 3; ++s) {
    const std::string stage = name + ".enc" + std::to_string(s + 1);
    const int stride = s == 0 ? 1 : 2;
    enc_in_feature[s] = Conv2d(store, stage + ".in_feature", c, c, 3, rng, stride);
    enc_in_hidden[s] = Conv2d(store, stage + ".in_hidden", c, c, 3, rng, stride);
    encoder[s] = RtBlock(store, stage + ".block", c, BlockKind::encoder, config.alpha_init, rng);
  }
  for (int s = 1; s >= 0; --s) {
    const std::string stage = name + ".dec" + std::to_string(s + 1);
    dec_up_feature[s] = TransposedConv2x(store, stage + ".up_feature", c, c, rng);
    dec_up_hidden[s] = TransposedConv2x(store, stage + ".up_hidden", c, c, rng);
    decoder[s] = RtBlock(store, stage + ".block", c, BlockKind::decoder, config.alpha_init, rng);
  }
  head = Conv2d(store, name + ".head", c, config.atoms + config.scales, 3, rng);
  bias_head_to_delta(config.delta_logit_gap, config.head_init_scale, rng);
}

void RecurrentTransformer::bias_head_to_delta(Real logit_gap, Real weight_scale, Rng& rng) {
  Tensor& w = head.weight.mutable_value();
  const Real bound = 1.0 / std::sqrt(static_cast<Real>(w.dim(1) * w.dim(2) * w.dim(3)));
  w = uniform_tensor(w.shape(), -bound, bound, rng) * weight_scale;
  Tensor& b = head.bias.mutable_value();
  b.fill(0.0);
  b[0] = 1.0;
  b[config_.atoms] = logit_gap;
}

RtOutput RecurrentTransformer::operator()(const Var& feature_in, const Var& hidden_in,
                                          const RtState* long_state) const {
  const Shape& shape = feature_in.shape();
  if (shape != hidden_in.shape() || shape.size() != 3 || shape[0] != config_.channels) {
    throw ValidationError("rt_forward: feature " + shape_str(shape) + " and hidden " +
                          shape_str(hidden_in.shape()) + " must both be (" +
                          std::to_string(config_.channels) + ",H,W)");
  }
  if (shape[1] % 4 != 0 || shape[2] % 4 != 0) {
    throw ValidationError("rt_forward: spatial size " + shape_str(shape) + " not divisible by 4");
  }
  if (long_state && !long_state->empty() && long_state->long_hidden.size() != 2) {
    throw ValidationError("rt_forward: long-term state must hold two scales");
  }
  auto long_at = [&](int s) -> std::optional<Var> {
    if (!long_state || long_state->empty()) return std::nullopt;
    return long_state->long_hidden[s];
  };

  Var o[3], hd[3];
  Var x = feature_in, h = hidden_in;
  for (int s = 0; s < 3; ++s) {
    std::tie(o[s], hd[s]) = encoder[s](enc_in_feature[s](x), enc_in_hidden[s](h), std::nullopt);
    x = o[s];
    h = hd[s];
  }

  RtState next;
  next.long_hidden.resize(2);
  Var up = o[2], up_hidden = hd[2];
  for (int s = 1; s >= 0; --s) {
    const Var feature = dec_up_feature[s](up);
    const Var short_hidden = add(dec_up_hidden[s](up_hidden), hd[s]);
    std::optional<Var> long_hidden = long_at(s);
    if (!long_hidden) long_hidden = zeros_var(feature.shape());
    auto [ou, hu] = decoder[s](feature, short_hidden, long_hidden);
    up = add(ou, o[s]);
    up_hidden = hu;
    next.long_hidden[s] = hu;
  }

  const Var logits = head(up);
  RtOutput result;
  result.coeff.omega = slice0(logits, 0, config_.atoms);
  result.coeff.mu = softmax_channels(slice0(logits, config_.atoms, config_.scales));
  result.state = std::move(next);
  return result;
}

}  // namespace bvsrik
