#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "bvsrik/checkpoint.hpp"
#include "bvsrik/error.hpp"
#include "bvsrik/evaluation.hpp"
#include "bvsrik/metrics.hpp"
#include "bvsrik/resize.hpp"
#include "bvsrik/training.hpp"
#include "support.hpp"

using namespace bvsrik;
using testing_support::random_tensor;
using testing_support::scratch_dir;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.channels = 4;
  c.scales = 2;
  c.atoms = 2;
  c.radius = 1;
  c.extract_blocks = 1;
  c.upsample_blocks = 1;
  c.inr_hidden = 8;
  c.seed = 5;
  return c;
}

std::shared_ptr<const FlowEstimator> zero_flow() { return std::make_shared<ZeroFlowEstimator>(); }

std::vector<NamedClip> tiny_dataset(int frames = 4, int side = 64, std::uint64_t seed = 3) {
  return {{"clip", make_triplet(synthetic_clip(frames, side, side, seed), Scenario::gaussian, seed + 1)}};
}

TrainConfig short_run(std::int64_t steps) {
  TrainConfig t;
  t.lr = 5e-4;
  t.epochs = 1000;
  t.batch = 1;
  t.patch = 32;
  t.max_steps = steps;
  t.seed = 9;
  return t;
}

Real hand_charbonnier(const Tensor& a, const Tensor& b, Real eps) {
  Real acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::sqrt((a[i] - b[i]) * (a[i] - b[i]) + eps * eps);
  return acc / static_cast<Real>(a.size());
}

Real luma(const Tensor& rgb, int p) {
  const int plane = rgb.dim(1) * rgb.dim(2);
  return 0.299 * rgb[p] + 0.587 * rgb[plane + p] + 0.114 * rgb[2 * plane + p];
}

Tensor flip_horizontal(const Tensor& t) {
  Tensor out(t.shape());
  const int c = t.dim(0), h = t.dim(1), w = t.dim(2);
  for (int k = 0; k < c; ++k)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) out.at(k, i, j) = t.at(k, i, w - 1 - j);
  return out;
}

std::string read_bytes(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Charbonnier, EqualInputsGiveEps) {
  const Var a = Var::constant(random_tensor({3, 4, 4}, 1));
  EXPECT_DOUBLE_EQ(charbonnier_loss(a, a, 1e-3).value().item(), 1e-3);
}

TEST(Charbonnier, ThreeFourFive) {
  const Var a = Var::constant(Tensor({1}, 3.0)), b = Var::constant(Tensor({1}, 0.0));
  EXPECT_DOUBLE_EQ(charbonnier_loss(a, b, 4.0).value().item(), 5.0);
}

TEST(Charbonnier, MatchesElementwiseHandComputation) {
  const Tensor a = random_tensor({2, 2}, 2), b = random_tensor({2, 2}, 3);
  const Real expected = (std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + 1e-6) + std::sqrt((a[1] - b[1]) * (a[1] - b[1]) + 1e-6) +
                         std::sqrt((a[2] - b[2]) * (a[2] - b[2]) + 1e-6) + std::sqrt((a[3] - b[3]) * (a[3] - b[3]) + 1e-6)) /
                        4;
  EXPECT_NEAR(charbonnier_loss(Var::constant(a), Var::constant(b), 1e-3).value().item(), expected, 1e-7);
}

TEST(Charbonnier, GradientMatchesFiniteDifferences) {
  const Var a = Var::parameter(random_tensor({2, 3, 3}, 4));
  const Var b = Var::constant(random_tensor({2, 3, 3}, 5));
  const auto r = testing_support::check_gradient(a, [&] { return charbonnier_loss(a, b, 1e-3); }, 18);
  EXPECT_GT(r.checked, 0);
  EXPECT_LT(r.worst, 1e-4);
}

TEST(Charbonnier, RejectsShapeMismatch) {
  EXPECT_THROW(charbonnier_loss(Var::constant(Tensor({2, 2})), Var::constant(Tensor({4})), 1e-3), ValidationError);
}

TEST(TotalLoss, DefaultLambdaIsPointTwo) { EXPECT_EQ(LossConfig{}.lambda, 0.2); }

TEST(TotalLoss, ZeroLambdaIsReconstructionOnly) {
  const Tensor sr = random_tensor({2, 2}, 6), gt = random_tensor({2, 2}, 7);
  const Tensor c = random_tensor({2, 2}, 8), dn = random_tensor({2, 2}, 9);
  LossConfig cfg;
  cfg.lambda = 0;
  const Real v = total_loss({Var::constant(sr)}, {gt}, {Var::constant(c)}, {dn}, cfg).value().item();
  EXPECT_DOUBLE_EQ(v, hand_charbonnier(sr, gt, 1e-3));
}

TEST(TotalLoss, ComposesBothTerms) {
  const Tensor sr0 = random_tensor({2, 2}, 10), sr1 = random_tensor({2, 2}, 11);
  const Tensor gt0 = random_tensor({2, 2}, 12), gt1 = random_tensor({2, 2}, 13);
  const Tensor c0 = random_tensor({2, 2}, 14), c1 = random_tensor({2, 2}, 15);
  const Tensor dn0 = random_tensor({2, 2}, 16), dn1 = random_tensor({2, 2}, 17);
  const LossConfig cfg;
  const Real lr = (hand_charbonnier(sr0, gt0, 1e-3) + hand_charbonnier(sr1, gt1, 1e-3)) / 2;
  const Real lc = (hand_charbonnier(c0, dn0, 1e-3) + hand_charbonnier(c1, dn1, 1e-3)) / 2;
  const Real v = total_loss({Var::constant(sr0), Var::constant(sr1)}, {gt0, gt1},
                            {Var::constant(c0), Var::constant(c1)}, {dn0, dn1}, cfg)
                     .value()
                     .item();
  EXPECT_NEAR(v, lr + 0.2 * lc, 1e-12);

  LossConfig no_lc;
  no_lc.use_correction = false;
  const Real w = total_loss({Var::constant(sr0), Var::constant(sr1)}, {gt0, gt1},
                            {Var::constant(c0), Var::constant(c1)}, {dn0, dn1}, no_lc)
                     .value()
                     .item();
  EXPECT_NEAR(w, lr, 1e-12);
}

TEST(TotalLoss, BoundedBelowByCharbonnierFloor) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tensor sr = random_tensor({3, 4, 4}, 20 + seed), c = random_tensor({3, 1, 1}, 40 + seed);
    const LossConfig cfg;
    const Real v = total_loss({Var::constant(sr)}, {sr}, {Var::constant(c)}, {random_tensor({3, 1, 1}, 60 + seed)}, cfg)
                       .value()
                       .item();
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GE(v, 1e-3 * 1.2 - 1e-15);
  }
}

TEST(TotalLoss, RejectsMismatchedFrameCounts) {
  EXPECT_THROW(total_loss({Var::constant(Tensor({2, 2}))}, {Tensor({2, 2}), Tensor({2, 2})}, {}, {}, LossConfig{}),
               ValidationError);
}

TEST(PsnrY, IdenticalImagesAreCapped) {
  const Tensor a = random_tensor({3, 8, 8}, 1, 0, 1);
  EXPECT_EQ(psnr_y(a, a), kPsnrCap);
}

TEST(PsnrY, UniformOffsetIsTwentyDb) {
  EXPECT_NEAR(psnr_y(Tensor({3, 8, 8}, 0.5), Tensor({3, 8, 8}, 0.6)), 20.0, 1e-6);
}

TEST(PsnrY, MatchesDirectMse) {
  const Tensor a = random_tensor({3, 9, 7}, 2, 0, 1), b = random_tensor({3, 9, 7}, 3, 0, 1);
  Real mse = 0;
  for (int p = 0; p < 63; ++p) mse += std::pow(luma(a, p) - luma(b, p), 2) / 63;
  EXPECT_NEAR(psnr_y(a, b), 10 * std::log10(1 / mse), 1e-6);
}

TEST(PsnrY, RejectsShapeMismatch) { EXPECT_THROW(psnr_y(Tensor({3, 4, 4}), Tensor({3, 4, 5})), ValidationError); }

TEST(Ssim, IdenticalImagesGiveOne) {
  const Tensor a = random_tensor({1, 16, 20}, 4, 0, 1);
  EXPECT_EQ(ssim(a, a), 1.0);
}

TEST(Ssim, ConstantImagesMatchLuminanceTerm) {
  const Real m1 = 0.2, m2 = 0.7, c1 = 0.01 * 0.01;
  const Real expected = (2 * m1 * m2 + c1) / (m1 * m1 + m2 * m2 + c1);
  EXPECT_NEAR(ssim(Tensor({1, 12, 12}, m1), Tensor({1, 12, 12}, m2)), expected, 1e-9);
}

TEST(Ssim, IsSymmetric) {
  const Tensor a = random_tensor({1, 14, 13}, 5, 0, 1), b = random_tensor({1, 14, 13}, 6, 0, 1);
  EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-9);
  const Real v = ssim(a, b);
  EXPECT_GE(v, -1.0);
  EXPECT_LE(v, 1.0);
}

TEST(Ssim, RejectsImagesSmallerThanWindow) {
  EXPECT_THROW(ssim(Tensor({1, 10, 20}), Tensor({1, 10, 20})), ValidationError);
}

TEST(Metrics, InvariantUnderSharedFlip) {
  const Tensor a = random_tensor({3, 16, 16}, 7, 0, 1), b = random_tensor({3, 16, 16}, 8, 0, 1);
  EXPECT_NEAR(psnr_y(a, b), psnr_y(flip_horizontal(a), flip_horizontal(b)), 1e-9);
  EXPECT_NEAR(ssim_y(a, b), ssim_y(flip_horizontal(a), flip_horizontal(b)), 1e-9);
}

TEST(Tof, IdenticalClipsGiveZero) {
  const auto clip = synthetic_clip(3, 24, 24, 1);
  EXPECT_EQ(tof(clip, clip, ClassicalFlowEstimator()), 0.0);
}

TEST(Tof, ShiftedFrameIsDetected) {
  const Tensor frame = synthetic_clip(1, 32, 32, 2)[0];
  const std::vector<Tensor> gt(3, frame);
  std::vector<Tensor> sr = gt;
  Tensor flow({2, 32, 32});
  for (int p = 0; p < 32 * 32; ++p) flow[p] = 1.0;
  sr[1] = warp(frame, flow);
  EXPECT_GT(tof(sr, gt, ClassicalFlowEstimator()), 0.0);
}

TEST(Tof, MatchesFormula) {
  const auto gt = synthetic_clip(3, 24, 24, 3), sr = synthetic_clip(3, 24, 24, 4);
  const ClassicalFlowEstimator flow;
  Real expected = 0;
  for (int t = 1; t < 3; ++t) {
    const Tensor a = flow.estimate(gt[t - 1], gt[t]), b = flow.estimate(sr[t - 1], sr[t]);
    Real d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
    expected += d / a.size() / 2;
  }
  EXPECT_NEAR(tof(sr, gt, flow), expected, 1e-6);
}

TEST(Tof, RejectsShortClips) {
  const auto clip = synthetic_clip(1, 16, 16, 5);
  EXPECT_THROW(tof(clip, clip, ZeroFlowEstimator()), ValidationError);
}

TEST(Schedule, CosineEndpoints) {
  EXPECT_DOUBLE_EQ(cosine_lr(0, 100, 1e-3, 1e-7), 1e-3);
  EXPECT_NEAR(cosine_lr(50, 100, 1e-3, 1e-7), (1e-3 + 1e-7) / 2, 1e-15);
  EXPECT_NEAR(cosine_lr(100, 100, 1e-3, 1e-7), 1e-7, 1e-18);
}

TEST(Schedule, FullConfigurationIsExpressible) {
  TrainConfig t;
  t.epochs = 400;
  t.batch = 7;
  t.patch = 256;
  t.lr = 1e-4;
  EXPECT_NO_THROW(t.validate());
  t.patch = 250;
  EXPECT_THROW(t.validate(), ValidationError);
}

TEST(Optimizer, ClipGradNormRescales) {
  ParameterStore store;
  Var p = store.add("p", Tensor({2}, 0.0));
  backward(sum(mul(p, Var::constant(Tensor({2}, std::vector<Real>{30.0, 40.0})))));
  EXPECT_DOUBLE_EQ(clip_grad_norm(store, 10.0), 50.0);
  EXPECT_NEAR(p.grad()[0], 6.0, 1e-12);
  EXPECT_NEAR(p.grad()[1], 8.0, 1e-12);
}

TEST(Optimizer, AdamFirstStepMovesByLearningRate) {
  ParameterStore store;
  Var p = store.add("p", Tensor({2}, std::vector<Real>{1.0, -1.0}));
  Var q = store.add("q", Tensor({1}, 0.5), Real{0.4});
  backward(add(sum(mul(p, p)), sum(q)));
  Adam adam(store);
  adam.step(0.25);
  EXPECT_NEAR(p.value()[0], 0.75, 1e-6);
  EXPECT_NEAR(p.value()[1], -0.75, 1e-6);
  EXPECT_EQ(q.value()[0], 0.4);
}

TEST(Training, SmallStepDecreasesLossOnFrozenBatch) {
  BvsrIkModel model(tiny_config(), zero_flow());
  const auto lr = synthetic_clip(3, 8, 8, 11), gt = synthetic_clip(3, 32, 32, 12);
  std::vector<Tensor> dn;
  for (const Tensor& g : gt) dn.push_back(bicubic_resize(g, 8, 8));
  auto loss_now = [&] {
    const ClipTensors out = model.forward(lr, false);
    return total_loss(out.sr, gt, out.corrected, dn, LossConfig{});
  };
  model.parameters().zero_grad();
  const Var before = loss_now();
  backward(before);
  Adam adam(model.parameters());
  adam.step(1e-6);
  NoGradGuard no_grad;
  EXPECT_LT(loss_now().value().item(), before.value().item());
}

TEST(Training, DeskSmokeRunsTwoHundredSteps) {
  BvsrIkModel model(ModelConfig::desk(), zero_flow());
  Trainer trainer(model, tiny_dataset(), short_run(200), LossConfig{});
  EXPECT_EQ(trainer.total_steps(), 200);
  for (int s = 0; s < 200; ++s) ASSERT_TRUE(std::isfinite(trainer.step())) << s;
  EXPECT_EQ(trainer.losses().size(), 200u);
}

TEST(Training, SameSeedReproducesLossCurve) {
  auto curve = [] {
    BvsrIkModel model(tiny_config(), zero_flow());
    Trainer trainer(model, tiny_dataset(), short_run(6), LossConfig{});
    for (int s = 0; s < 6; ++s) trainer.step();
    return trainer.losses();
  };
  const auto a = curve(), b = curve();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(Training, ResumeReproducesNextLoss) {
  const auto dir = scratch_dir("resume");
  Real expected = 0;
  {
    BvsrIkModel model(tiny_config(), zero_flow());
    Trainer trainer(model, tiny_dataset(), short_run(10), LossConfig{});
    for (int s = 0; s < 4; ++s) trainer.step();
    trainer.save(dir / "ckpt.bin", nlohmann::ordered_json::object());
    expected = trainer.step();
  }
  BvsrIkModel model(tiny_config(), zero_flow());
  Trainer trainer(model, tiny_dataset(), short_run(10), LossConfig{});
  trainer.resume(dir / "ckpt.bin");
  EXPECT_EQ(trainer.step_index(), 4);
  EXPECT_EQ(trainer.losses().size(), 4u);
  EXPECT_NEAR(trainer.step(), expected, 1e-6);
}

TEST(Training, NonFiniteLossAbortsWithStep) {
  BvsrIkModel model(tiny_config(), zero_flow());
  Trainer trainer(model, tiny_dataset(), short_run(10), LossConfig{});
  trainer.step();
  Var b = model.parameters().get("up.out.bias");
  b.mutable_value()[0] = std::nan("");
  try {
    trainer.step();
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("step 2"), std::string::npos) << e.what();
  }
}

TEST(Training, MissingDataIsAnError) {
  EXPECT_THROW(load_dataset(scratch_dir("nodata") / "absent"), IoError);
  EXPECT_THROW(load_dataset(scratch_dir("nodata")), IoError);
  BvsrIkModel model(tiny_config(), zero_flow());
  EXPECT_THROW(Trainer(model, {}, short_run(1), LossConfig{}), TrainingError);
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
  const auto dir = scratch_dir("ckpt_roundtrip");
  BvsrIkModel model(tiny_config(), zero_flow());
  Trainer trainer(model, tiny_dataset(), short_run(3), LossConfig{});
  for (int s = 0; s < 3; ++s) trainer.step();
  trainer.save(dir / "c.bin", nlohmann::ordered_json::object());
  const auto clip = synthetic_clip(3, 8, 12, 13);
  const ClipTensors before = model.forward(clip);
  const auto loaded = load_model(dir / "c.bin", zero_flow());
  const ClipTensors after = loaded->forward(clip);
  for (int t = 0; t < 3; ++t) {
    EXPECT_EQ(before.sr[t].value().storage(), after.sr[t].value().storage());
    EXPECT_EQ(before.corrected[t].value().storage(), after.corrected[t].value().storage());
  }
  EXPECT_EQ(checkpoint_id(dir / "c.bin"), checkpoint_id(dir / "c.bin"));
  EXPECT_EQ(checkpoint_id(dir / "c.bin").size(), 16u);
}

TEST(Checkpoint, ConfigMismatchNamesBothFingerprints) {
  const auto dir = scratch_dir("ckpt_mismatch");
  BvsrIkModel model(tiny_config(), zero_flow());
  write_checkpoint(dir / "c.bin", model_header(model.config()), model_tensors(model));
  ModelConfig other = tiny_config();
  other.channels = 8;
  try {
    load_model(dir / "c.bin", zero_flow(), &other);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(fingerprint_hex(tiny_config().fingerprint())), std::string::npos) << msg;
    EXPECT_NE(msg.find(fingerprint_hex(other.fingerprint())), std::string::npos) << msg;
  }
}

TEST(Checkpoint, RejectsForeignFiles) {
  const auto dir = scratch_dir("ckpt_foreign");
  std::ofstream(dir / "junk.bin") << "not a checkpoint at all";
  EXPECT_THROW(read_checkpoint(dir / "junk.bin"), IoError);
  EXPECT_THROW(read_checkpoint(dir / "absent.bin"), IoError);
}

TEST(Evaluate, BypassGivesOracleMetrics) {
  const MetricsReport r = evaluate(nullptr, tiny_dataset(3, 64, 21), ClassicalFlowEstimator());
  ASSERT_EQ(r.clips.size(), 1u);
  EXPECT_EQ(r.aggregate.psnr_y, kPsnrCap);
  EXPECT_EQ(r.aggregate.ssim, 1.0);
  EXPECT_EQ(r.aggregate.tof, 0.0);
}

TEST(Evaluate, AggregatesAreMeansOfClips) {
  BvsrIkModel model(tiny_config(), zero_flow());
  auto clips = tiny_dataset(3, 48, 22);
  clips.push_back({"second", make_triplet(synthetic_clip(4, 48, 48, 30), Scenario::motion, 31)});
  const MetricsReport r = evaluate(&model, clips, ZeroFlowEstimator());
  ASSERT_EQ(r.clips.size(), 2u);
  EXPECT_DOUBLE_EQ(r.aggregate.psnr_y, (r.clips[0].psnr_y + r.clips[1].psnr_y) / 2);
  EXPECT_DOUBLE_EQ(r.aggregate.ssim, (r.clips[0].ssim + r.clips[1].ssim) / 2);
  EXPECT_DOUBLE_EQ(r.aggregate.tof, (r.clips[0].tof + r.clips[1].tof) / 2);
  EXPECT_EQ(r.clips[1].frames, 4);
  EXPECT_EQ(r.to_json()["schema_version"], kReportSchemaVersion);
}

TEST(Evaluate, ReportIsByteStable) {
  const auto dir = scratch_dir("eval_stable");
  BvsrIkModel model(tiny_config(), zero_flow());
  write_checkpoint(dir / "c.bin", model_header(model.config()), model_tensors(model));
  write_triplet(tiny_dataset(3, 32, 23)[0].triplet, dir / "data");
  for (const char* name : {"a.json", "b.json"}) {
    MetricsReport r = evaluate(dir / "c.bin", dir / "data", ZeroFlowEstimator());
    write_report(r, dir / name);
  }
  EXPECT_EQ(read_bytes(dir / "a.json"), read_bytes(dir / "b.json"));
  EXPECT_FALSE(read_bytes(dir / "a.json").empty());
}
