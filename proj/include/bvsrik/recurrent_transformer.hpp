#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bvsrik/nn.hpp"
#include "bvsrik/varying_filter.hpp"

namespace bvsrik {

/// Recurrent optimization attention parameters for one block.
struct RoaParams {
  Conv2d qkv_feature;    // 3x3, C -> 3C, no bias
  Conv2d qkv_hidden;     // 3x3, C -> 3C, no bias
  ChannelAffine output;  // 1x1 depth-wise
  Var alpha;             // positive temperature, shape (1)

  RoaParams() = default;
  RoaParams(ParameterStore& store, const std::string& name, int channels, Real alpha_init, Rng& rng);
};

/// Channel (transposed) attention mixing a feature branch and a hidden-state
/// branch:
///   Q = Q_o + Q_h, K = K_o + K_h, V = V_o + V_h     (each C x H'W')
///   A = Conv1x1_dw( softmax_rows(Q K^T / alpha) V )
/// softmax_rows normalizes, for every output channel, over the key channels.
Var roa(const Var& feature, const Var& hidden, const RoaParams& params);

/// Gated pointwise feed-forward block with expansion 2 and a depth-wise
/// 3x3 convolution in the gate.
class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(ParameterStore& store, const std::string& name, int channels, Rng& rng);
  Var operator()(const Var& x) const;

  Conv2d project_in;        // C -> 4C
  DepthwiseConv2d gate_dw;  // 4C, 3x3
  Conv2d project_out;       // 2C -> C
};

enum class BlockKind { encoder, decoder };

/// RT-Block:
///   A        = roa(LN(feature), LN(mix)),  mix = short (+ long for decoders)
///   feature' = feature + FFN(LN(feature + A))
///   short'   = Conv3x3(A)
class RtBlock {
 public:
  RtBlock() = default;
  RtBlock(ParameterStore& store, const std::string& name, int channels, BlockKind kind,
          Real alpha_init, Rng& rng);

  /// Encoder blocks must not receive a long-term hidden state; decoder blocks
  /// treat an absent one as zeros.
  std::pair<Var, Var> operator()(const Var& feature, const Var& short_hidden,
                                 const std::optional<Var>& long_hidden) const;

  BlockKind kind = BlockKind::encoder;
  LayerNorm norm_feature, norm_hidden, norm_ffn;
  RoaParams attention;
  FeedForward ffn;
  Conv2d hidden_update;
};

struct RtConfig {
  int channels = 16;
  int atoms = 4;
  int scales = 3;
  Real alpha_init = 8.0;
  /// Untrained head bias: omega = e_1 and a logit gap in favour of the delta scale.
  Real delta_logit_gap = 4.0;
  Real head_init_scale = 1e-2;
};

/// Long-term hidden states carried across time steps, one per decoder scale
/// (index 0 = full resolution, 1 = half resolution). Empty = sequence start.
struct RtState {
  std::vector<Var> long_hidden;
  bool empty() const { return long_hidden.empty(); }
};

struct RtOutput {
  CoefficientField coeff;
  RtState state;
};

/// Three-scale encoder-decoder of RT-Blocks predicting (omega, mu).
class RecurrentTransformer {
 public:
  RecurrentTransformer() = default;
  RecurrentTransformer(ParameterStore& store, const std::string& name, const RtConfig& config, Rng& rng);

  /// feature_in and hidden_in are (C_f, H, W) with H, W divisible by 4.
  RtOutput operator()(const Var& feature_in, const Var& hidden_in, const RtState* long_state) const;

  /// Re-initializes the output head so that omega = e_1 and mu favours the
  /// delta scale by `logit_gap`, with head weights scaled by weight_scale.
  void bias_head_to_delta(Real logit_gap, Real weight_scale, Rng& rng);

  const RtConfig& config() const { return config_; }

  RtConfig config_;
  Conv2d enc_in_feature[3], enc_in_hidden[3];  // [0]: 3x3, [1],[2]: stride-2 3x3
  RtBlock encoder[3];
  TransposedConv2x dec_up_feature[2], dec_up_hidden[2];  // [0]: to scale 1, [1]: to scale 2
  RtBlock decoder[2];
  Conv2d head;
};

}  // namespace bvsrik
