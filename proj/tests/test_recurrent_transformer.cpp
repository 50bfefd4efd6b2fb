#include <gtest/gtest.h>

#include <cmath>

#include "bvsrik/error.hpp"
#include "bvsrik/recurrent_transformer.hpp"
#include "support.hpp"

using namespace bvsrik;
using testing_support::check_gradient;
using testing_support::random_tensor;

namespace {

RtConfig small_config() {
  RtConfig c;
  c.channels = 4;
  c.atoms = 3;
  c.scales = 2;
  return c;
}

// Only the centre tap of each 3x3 projection is nonzero, so every projection
// is a per-pixel matrix product.
void set_center_taps(Conv2d& conv, const std::vector<std::vector<Real>>& m) {
  Tensor& w = conv.weight.mutable_value();
  w.fill(0.0);
  const int out = w.dim(0), in = w.dim(1);
  for (int o = 0; o < out; ++o)
    for (int i = 0; i < in; ++i) w[((o * in + i) * 3 + 1) * 3 + 1] = m[o][i];
}

bool has_nonzero(const Tensor& t) {
  for (Real v : t.storage())
    if (v != 0.0) return true;
  return false;
}

}  // namespace

TEST(Roa, ZeroInputsGiveZeroOutput) {
  ParameterStore store;
  Rng rng(1);
  const RoaParams p(store, "roa", 4, 8.0, rng);
  const Var zero = Var::constant(Tensor({4, 6, 5}));
  const Tensor out = roa(zero, zero, p).value();
  EXPECT_EQ(out.shape(), (Shape{4, 6, 5}));
  EXPECT_EQ(out.max_abs(), 0.0);
}

TEST(Roa, PreservesShape) {
  ParameterStore store;
  Rng rng(2);
  const RoaParams p(store, "roa", 3, 8.0, rng);
  const Var f = Var::constant(random_tensor({3, 7, 4}, 3)), h = Var::constant(random_tensor({3, 7, 4}, 4));
  EXPECT_EQ(roa(f, h, p).shape(), (Shape{3, 7, 4}));
  EXPECT_THROW(roa(f, Var::constant(random_tensor({3, 4, 7}, 5)), p), ValidationError);
}

TEST(Roa, MatchesHandEvaluation) {
  ParameterStore store;
  Rng rng(6);
  RoaParams p(store, "roa", 2, 8.0, rng);
  const std::vector<std::vector<Real>> wf = {{1, 0}, {0, 1}, {0.5, -1}, {1, 1}, {2, 0}, {0, -1}};
  const std::vector<std::vector<Real>> wh = {{0, 1}, {1, 0}, {0, 0.5}, {-1, 0}, {0, 1}, {1, 1}};
  set_center_taps(p.qkv_feature, wf);
  set_center_taps(p.qkv_hidden, wh);
  p.alpha.mutable_value()[0] = 2.0;
  p.output.scale.mutable_value() = Tensor({2}, std::vector<Real>{1.5, -0.5});
  p.output.shift.mutable_value() = Tensor({2}, std::vector<Real>{0.1, 0.2});

  const Tensor x({2, 2, 2}, std::vector<Real>{0.2, -0.4, 0.6, 0.1, -0.3, 0.5, 0.0, 0.9});
  const Tensor hid({2, 2, 2}, std::vector<Real>{0.7, 0.1, -0.2, 0.3, 0.4, -0.6, 0.8, -0.1});

  Real proj[6][4];
  for (int o = 0; o < 6; ++o)
    for (int px = 0; px < 4; ++px)
      proj[o][px] = wf[o][0] * x[px] + wf[o][1] * x[4 + px] + wh[o][0] * hid[px] + wh[o][1] * hid[4 + px];
  Real attn[2][2];
  for (int a = 0; a < 2; ++a) {
    Real s[2];
    for (int b = 0; b < 2; ++b) {
      s[b] = 0;
      for (int px = 0; px < 4; ++px) s[b] += proj[a][px] * proj[2 + b][px];
      s[b] /= 2.0;
    }
    const Real z = std::exp(s[0]) + std::exp(s[1]);
    attn[a][0] = std::exp(s[0]) / z;
    attn[a][1] = std::exp(s[1]) / z;
  }
  const Real scale[2] = {1.5, -0.5}, shift[2] = {0.1, 0.2};
  const Tensor out = roa(Var::constant(x), Var::constant(hid), p).value();
  for (int a = 0; a < 2; ++a)
    for (int px = 0; px < 4; ++px) {
      const Real mixed = attn[a][0] * proj[4][px] + attn[a][1] * proj[5][px];
      EXPECT_NEAR(out[a * 4 + px], scale[a] * mixed + shift[a], 1e-12);
    }
}

TEST(Roa, GradientsMatchFiniteDifferences) {
  ParameterStore store;
  Rng rng(7);
  RoaParams p(store, "roa", 3, 2.0, rng);
  p.output.shift.mutable_value() = random_tensor({3}, 8);
  const Var f = Var::parameter(random_tensor({3, 4, 4}, 9)), h = Var::constant(random_tensor({3, 4, 4}, 10));
  const Var weights = Var::constant(random_tensor({3, 4, 4}, 11));
  auto loss = [&] { return sum(mul(roa(f, h, p), weights)); };
  for (const Var& v : {f, p.qkv_feature.weight, p.qkv_hidden.weight, p.alpha, p.output.scale}) {
    const auto r = check_gradient(v, loss, 16);
    EXPECT_GT(r.checked, 0);
    EXPECT_LT(r.worst, 1e-4);
  }
}

TEST(RtBlock, EncoderRejectsLongTermState) {
  ParameterStore store;
  Rng rng(12);
  const RtBlock block(store, "b", 4, BlockKind::encoder, 8.0, rng);
  const Var z = Var::constant(Tensor({4, 4, 4}));
  EXPECT_THROW(block(z, z, z), ContractViolation);
}

TEST(RtBlock, ZeroInputsGiveFiniteOutputsOfInputShape) {
  ParameterStore store;
  Rng rng(13);
  for (BlockKind kind : {BlockKind::encoder, BlockKind::decoder}) {
    const RtBlock block(store, kind == BlockKind::encoder ? "e" : "d", 4, kind, 8.0, rng);
    const Var z = Var::constant(Tensor({4, 6, 6}));
    const std::optional<Var> lh = kind == BlockKind::decoder ? std::optional<Var>(z) : std::nullopt;
    const auto [o, hs] = block(z, z, lh);
    EXPECT_EQ(o.shape(), (Shape{4, 6, 6}));
    EXPECT_EQ(hs.shape(), (Shape{4, 6, 6}));
    EXPECT_TRUE(o.value().all_finite());
    EXPECT_TRUE(hs.value().all_finite());
  }
}

TEST(RtBlock, DecoderTreatsAbsentLongStateAsZeros) {
  ParameterStore store;
  Rng rng(14);
  const RtBlock block(store, "d", 4, BlockKind::decoder, 8.0, rng);
  const Var f = Var::constant(random_tensor({4, 4, 4}, 15)), h = Var::constant(random_tensor({4, 4, 4}, 16));
  const auto a = block(f, h, std::nullopt);
  const auto b = block(f, h, Var::constant(Tensor({4, 4, 4})));
  EXPECT_EQ(a.first.value().storage(), b.first.value().storage());
  EXPECT_EQ(a.second.value().storage(), b.second.value().storage());
}

TEST(RtBlock, IsPure) {
  ParameterStore store;
  Rng rng(17);
  const RtBlock block(store, "d", 4, BlockKind::decoder, 8.0, rng);
  const Var f = Var::constant(random_tensor({4, 4, 4}, 18)), h = Var::constant(random_tensor({4, 4, 4}, 19));
  const Var l = Var::constant(random_tensor({4, 4, 4}, 20));
  const auto a = block(f, h, l);
  const auto b = block(f, h, l);
  EXPECT_EQ(a.first.value().storage(), b.first.value().storage());
  EXPECT_EQ(a.second.value().storage(), b.second.value().storage());
}

TEST(RtBlock, ProjectionGradientMatchesFiniteDifferences) {
  ParameterStore store;
  Rng rng(21);
  const RtBlock block(store, "d", 3, BlockKind::decoder, 4.0, rng);
  const Var f = Var::constant(random_tensor({3, 4, 4}, 22)), h = Var::constant(random_tensor({3, 4, 4}, 23));
  const Var l = Var::constant(random_tensor({3, 4, 4}, 24));
  const Var w1 = Var::constant(random_tensor({3, 4, 4}, 25)), w2 = Var::constant(random_tensor({3, 4, 4}, 26));
  auto loss = [&] {
    const auto [o, hs] = block(f, h, l);
    return add(sum(mul(o, w1)), sum(mul(hs, w2)));
  };
  for (const Var& v : {block.attention.qkv_feature.weight, block.attention.qkv_hidden.weight,
                       block.norm_feature.gamma, block.ffn.project_in.weight}) {
    const auto r = check_gradient(v, loss, 16);
    EXPECT_GT(r.checked, 0);
    EXPECT_LT(r.worst, 1e-4);
  }
}

TEST(RecurrentTransformer, OutputFieldShapesAndNormalizedScaleWeights) {
  ParameterStore store;
  Rng rng(27);
  const RecurrentTransformer rt(store, "rt", small_config(), rng);
  const Var f = Var::constant(random_tensor({4, 8, 12}, 28)), h = Var::constant(random_tensor({4, 8, 12}, 29));
  const RtOutput out = rt(f, h, nullptr);
  EXPECT_EQ(out.coeff.omega.shape(), (Shape{3, 8, 12}));
  EXPECT_EQ(out.coeff.mu.shape(), (Shape{2, 8, 12}));
  ASSERT_EQ(out.state.long_hidden.size(), 2u);
  EXPECT_EQ(out.state.long_hidden[0].shape(), (Shape{4, 8, 12}));
  EXPECT_EQ(out.state.long_hidden[1].shape(), (Shape{4, 4, 6}));
  const Tensor& mu = out.coeff.mu.value();
  for (int p = 0; p < 96; ++p) {
    EXPECT_NEAR(mu[p] + mu[96 + p], 1.0, 1e-6);
    EXPECT_GE(mu[p], 0.0);
  }
}

TEST(RecurrentTransformer, NullStateEqualsExplicitZeros) {
  ParameterStore store;
  Rng rng(30);
  const RecurrentTransformer rt(store, "rt", small_config(), rng);
  const Var f = Var::constant(random_tensor({4, 8, 8}, 31)), h = Var::constant(random_tensor({4, 8, 8}, 32));
  RtState zeros;
  zeros.long_hidden = {Var::constant(Tensor({4, 8, 8})), Var::constant(Tensor({4, 4, 4}))};
  const RtOutput a = rt(f, h, nullptr), b = rt(f, h, &zeros), c = rt(f, h, &a.state);
  EXPECT_EQ(a.coeff.omega.value().storage(), b.coeff.omega.value().storage());
  EXPECT_EQ(a.coeff.mu.value().storage(), b.coeff.mu.value().storage());
  EXPECT_GT(max_abs_diff(a.coeff.omega.value(), c.coeff.omega.value()), 0.0);
}

TEST(RecurrentTransformer, RejectsBadShapes) {
  ParameterStore store;
  Rng rng(33);
  const RecurrentTransformer rt(store, "rt", small_config(), rng);
  const Var ok = Var::constant(Tensor({4, 8, 8}));
  EXPECT_THROW(rt(Var::constant(Tensor({4, 8, 6})), Var::constant(Tensor({4, 8, 6})), nullptr), ValidationError);
  EXPECT_THROW(rt(Var::constant(Tensor({3, 8, 8})), Var::constant(Tensor({3, 8, 8})), nullptr), ValidationError);
  EXPECT_THROW(rt(ok, Var::constant(Tensor({4, 4, 8})), nullptr), ValidationError);
  RtState bad;
  bad.long_hidden = {ok};
  EXPECT_THROW(rt(ok, ok, &bad), ValidationError);
}

TEST(RecurrentTransformer, FixedSeedIsDeterministic) {
  auto run = [] {
    ParameterStore store;
    Rng rng(34);
    const RecurrentTransformer rt(store, "rt", small_config(), rng);
    return rt(Var::constant(random_tensor({4, 8, 8}, 35)), Var::constant(random_tensor({4, 8, 8}, 36)), nullptr)
        .coeff.omega.value();
  };
  EXPECT_EQ(run().storage(), run().storage());
}

TEST(RecurrentTransformer, DeltaBiasedHeadGivesDeltaCoefficients) {
  ParameterStore store;
  Rng rng(37);
  RecurrentTransformer rt(store, "rt", small_config(), rng);
  rt.bias_head_to_delta(16.0, 0.0, rng);
  const RtOutput out =
      rt(Var::constant(random_tensor({4, 8, 8}, 38)), Var::constant(random_tensor({4, 8, 8}, 39)), nullptr);
  const Tensor &omega = out.coeff.omega.value(), &mu = out.coeff.mu.value();
  for (int p = 0; p < 64; ++p) {
    EXPECT_EQ(omega[p], 1.0);
    EXPECT_EQ(omega[64 + p], 0.0);
    EXPECT_NEAR(mu[p], 1.0, 1e-6);
  }
}

// Decoder hidden updates only influence the next time step, so the probe
// runs two recurrent steps before taking the loss on omega.
TEST(RecurrentTransformer, EveryParameterReceivesGradientFromOmega) {
  ParameterStore store;
  Rng rng(40);
  const RecurrentTransformer rt(store, "rt", small_config(), rng);
  const Var weights = Var::constant(random_tensor({3, 8, 8}, 41));
  const RtOutput first =
      rt(Var::constant(random_tensor({4, 8, 8}, 42)), Var::constant(random_tensor({4, 8, 8}, 43)), nullptr);
  const RtOutput second =
      rt(Var::constant(random_tensor({4, 8, 8}, 44)), Var::constant(random_tensor({4, 8, 8}, 45)), &first.state);
  store.zero_grad();
  backward(sum(mul(second.coeff.omega, weights)));
  for (const auto& entry : store.entries()) {
    ASSERT_FALSE(entry.var.grad().empty()) << entry.name;
    EXPECT_TRUE(has_nonzero(entry.var.grad())) << entry.name;
  }
}

TEST(RecurrentTransformer, EncoderWeightGradientMatchesFiniteDifferences) {
  ParameterStore store;
  Rng rng(46);
  RtConfig config = small_config();
  config.head_init_scale = 1.0;
  const RecurrentTransformer rt(store, "rt", config, rng);
  const Var f = Var::constant(random_tensor({4, 4, 4}, 47)), h = Var::constant(random_tensor({4, 4, 4}, 48));
  const Var weights = Var::constant(random_tensor({3, 4, 4}, 49));
  auto loss = [&] { return sum(mul(rt(f, h, nullptr).coeff.omega, weights)); };
  for (const Var& v : {rt.encoder[0].attention.qkv_feature.weight, rt.enc_in_hidden[1].weight, rt.head.weight}) {
    const auto r = check_gradient(v, loss, 12);
    EXPECT_GT(r.checked, 0);
    EXPECT_LT(r.worst, 1e-4);
  }
}
