#include "bvsrik/model.hpp"

#include <sstream>

#include "bvsrik/error.hpp"
#include "bvsrik/ops.hpp"
#include "bvsrik/resize.hpp"

namespace bvsrik {

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.channels = 16;
  c.scales = 3;
  c.atoms = 4;
  c.radius = 1;
  c.extract_blocks = 4;
  c.upsample_blocks = 6;
  return c;
}

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v < 1) throw ValidationError(std::string("model config: ") + name + " must be >= 1");
  };
  positive(channels, "channels");
  positive(scales, "scales");
  positive(atoms, "atoms");
  positive(extract_blocks, "extract_blocks");
  positive(upsample_blocks, "upsample_blocks");
  positive(inr_hidden, "inr_hidden");
  if (radius < 0) throw ValidationError("model config: radius must be >= 0");
  if (!(freq_low > 0) || !(freq_low <= freq_high)) throw ValidationError("model config: bad frequency range");
  if (!(alpha_init > 0)) throw ValidationError("model config: alpha_init must be positive");
}

std::string ModelConfig::canonical() const {
  std::ostringstream os;
  os.precision(17);
  os << "channels=" << channels << ";scales=" << scales << ";atoms=" << atoms << ";radius=" << radius
     << ";extract_blocks=" << extract_blocks << ";upsample_blocks=" << upsample_blocks
     << ";inr_hidden=" << inr_hidden << ";freq_low=" << freq_low << ";freq_high=" << freq_high
     << ";atom_output_scale=" << atom_output_scale << ";alpha_init=" << alpha_init
     << ";delta_logit_gap=" << delta_logit_gap << ";seed=" << seed << ";no_isc=" << ablation.no_isc
     << ";no_ita=" << ablation.no_ita << ";no_rec=" << ablation.no_rec << ";no_bidir=" << ablation.no_bidir;
  return os.str();
}

std::uint64_t ModelConfig::fingerprint() const {
  const std::string s = canonical();
  return fnv1a64(s.data(), s.size());
}

BvsrIkModel::BvsrIkModel(ModelConfig config, std::shared_ptr<const FlowEstimator> flow)
    : config_(std::move(config)), flow_(std::move(flow)) {
  config_.validate();
  if (!flow_) throw ValidationError("model: flow estimator required");
  const int c = config_.channels;
  Rng rng(config_.seed);

  atoms_ = init_atoms(config_.atoms, config_.freq_low, config_.freq_high, config_.seed ^ 0x9e3779b97f4a7c15ULL,
                      config_.inr_hidden, config_.atom_output_scale);
  register_atoms(params_, "dict", atoms_);

  RtConfig rt;
  rt.channels = c;
  rt.atoms = config_.atoms;
  rt.scales = config_.scales;
  rt.alpha_init = config_.alpha_init;
  rt.delta_logit_gap = config_.delta_logit_gap;

  srt_input_ = Conv2d(params_, "srt_input", 3, c, 3, rng);
  srt_ = RecurrentTransformer(params_, "srt", rt, rng);

  extract_first_ = Conv2d(params_, "extract.first", 3, c, 3, rng);
  for (int b = 0; b < config_.extract_blocks; ++b) {
    extract_blocks_.emplace_back(params_, "extract.block" + std::to_string(b + 1), c, rng);
  }

  const char* dir_names[2] = {"forward", "backward"};
  for (int d = 0; d < 2; ++d) {
    trt_[d] = RecurrentTransformer(params_, std::string("trt_") + dir_names[d], rt, rng);
    fusion_[d] = Conv2d(params_, std::string("fusion_") + dir_names[d], 2 * c, c, 3, rng);
  }

  for (int b = 0; b < config_.upsample_blocks; ++b) {
    up_blocks_.emplace_back(params_, "up.block" + std::to_string(b + 1), c, rng);
  }
  up_expand1_ = Conv2d(params_, "up.expand1", c, 4 * c, 3, rng);
  up_expand2_ = Conv2d(params_, "up.expand2", c, 4 * c, 3, rng);
  up_out_ = Conv2d(params_, "up.out", c, 3, 3, rng, 1, 0.1);
}

std::pair<Var, CoefficientField> BvsrIkModel::isc_correct(const Var& frame, const MultiScaleDictionary& dict) const {
  if (frame.value().rank() != 3 || frame.dim(0) != 3) {
    throw ValidationError("isc_correct: expected (3,H,W) frame, got " + shape_str(frame.shape()));
  }
  const Var projected = srt_input_(frame);
  RtOutput out = srt_(projected, projected, nullptr);
  Var corrected = filter(frame, dict, out.coeff);
  return {corrected, out.coeff};
}

Var BvsrIkModel::extract_features(const Var& corrected) const {
  Var x = leaky_relu(extract_first_(corrected), 0.1);
  for (const ResidualBlock& block : extract_blocks_) x = block(x);
  return x;
}

std::pair<Var, RtState> BvsrIkModel::ita_align(Direction direction, const Var& prev_aligned,
                                               const Var& cur_feature, const Var& flow,
                                               const MultiScaleDictionary& dict,
                                               const RtState* long_state) const {
  if (prev_aligned.shape() != cur_feature.shape()) {
    throw ValidationError("ita_align: previous " + shape_str(prev_aligned.shape()) + " vs current " +
                          shape_str(cur_feature.shape()));
  }
  const int d = direction == Direction::forward ? 0 : 1;
  const Var warped = warp(prev_aligned, flow);
  Var filtered = warped;
  RtState state;
  if (!config_.ablation.no_ita) {
    RtOutput out = trt_[d](warped, cur_feature, long_state);
    filtered = filter(warped, dict, out.coeff);
    state = std::move(out.state);
  }
  return {fusion_[d](concat0({filtered, cur_feature})), std::move(state)};
}

void BvsrIkModel::bidirectional_propagate(ClipTensors& clip, const MultiScaleDictionary& dict) const {
  const int frames = static_cast<int>(clip.features.size());
  if (frames == 0 || static_cast<int>(clip.corrected.size()) != frames) {
    throw ValidationError("bidirectional_propagate: corrected frames and features must be present");
  }
  auto estimate = [&](int target, int source) {
    try {
      return Var::constant(flow_->estimate(clip.corrected[target].value(), clip.corrected[source].value()));
    } catch (const std::exception& e) {
      throw FlowEstimationError("flow estimation failed for frames " + std::to_string(target) + " <- " +
                                std::to_string(source) + ": " + e.what());
    }
  };
  const Shape& fshape = clip.features[0].shape();
  const Var zero_flow = zeros_var({2, fshape[1], fshape[2]});
  const bool recurrent = !config_.ablation.no_rec;

  clip.aligned_forward.assign(frames, Var());
  RtState state;
  for (int t = 0; t < frames; ++t) {
    const Var& prev = t == 0 ? clip.features[0] : clip.aligned_forward[t - 1];
    const Var flow = t == 0 ? zero_flow : estimate(t, t - 1);
    auto [aligned, next] =
        ita_align(Direction::forward, prev, clip.features[t], flow, dict, recurrent ? &state : nullptr);
    clip.aligned_forward[t] = aligned;
    state = std::move(next);
  }

  if (config_.ablation.no_bidir) {
    clip.aligned_backward = clip.aligned_forward;
    return;
  }
  clip.aligned_backward.assign(frames, Var());
  state = RtState{};
  for (int t = frames - 1; t >= 0; --t) {
    const Var& cur = clip.aligned_forward[t];
    const Var& prev = t == frames - 1 ? cur : clip.aligned_backward[t + 1];
    const Var flow = t == frames - 1 ? zero_flow : estimate(t, t + 1);
    auto [aligned, next] = ita_align(Direction::backward, prev, cur, flow, dict, recurrent ? &state : nullptr);
    clip.aligned_backward[t] = aligned;
    state = std::move(next);
  }
}

Var BvsrIkModel::upsample(const Var& aligned, const Var& corrected, bool clamp_output) const {
  if (aligned.value().rank() != 3 || corrected.value().rank() != 3 || aligned.dim(1) != corrected.dim(1) ||
      aligned.dim(2) != corrected.dim(2)) {
    throw ValidationError("upsample: feature " + shape_str(aligned.shape()) + " and frame " +
                          shape_str(corrected.shape()) + " disagree");
  }
  Var x = aligned;
  for (const ResidualBlock& block : up_blocks_) x = block(x);
  x = leaky_relu(pixel_shuffle(up_expand1_(x), 2), 0.1);
  x = leaky_relu(pixel_shuffle(up_expand2_(x), 2), 0.1);
  const int h = corrected.dim(1) * kScaleFactor, w = corrected.dim(2) * kScaleFactor;
  Var out = add(up_out_(x), bicubic_resize(corrected, h, w));
  return clamp_output ? clamp(out, 0.0, 1.0) : out;
}

ClipTensors BvsrIkModel::forward(const std::vector<Tensor>& lr_clip, bool clamp_output) const {
  if (static_cast<int>(lr_clip.size()) != config_.frames()) {
    throw ValidationError("model_forward: clip has " + std::to_string(lr_clip.size()) + " frames, expected " +
                          std::to_string(config_.frames()));
  }
  const Shape& shape = lr_clip.front().shape();
  if (shape.size() != 3 || shape[0] != 3) {
    throw ValidationError("model_forward: frames must be (3,H,W), got " + shape_str(shape));
  }
  if (shape[1] % 4 != 0 || shape[2] % 4 != 0 || shape[1] == 0 || shape[2] == 0) {
    throw ValidationError("model_forward: spatial size " + shape_str(shape) + " not divisible by 4");
  }
  for (const Tensor& f : lr_clip) {
    if (f.shape() != shape) throw ValidationError("model_forward: frames differ in shape");
  }

  const MultiScaleDictionary dict = dictionary();
  ClipTensors clip;
  for (const Tensor& f : lr_clip) {
    const Var frame = Var::constant(f);
    clip.lr.push_back(frame);
    if (config_.ablation.no_isc) {
      clip.corrected.push_back(frame);
    } else {
      auto [corrected, coeff] = isc_correct(frame, dict);
      clip.corrected.push_back(corrected);
      clip.isc_coefficients.push_back(coeff);
    }
    clip.features.push_back(extract_features(clip.corrected.back()));
  }
  bidirectional_propagate(clip, dict);
  for (std::size_t t = 0; t < lr_clip.size(); ++t) {
    clip.sr.push_back(upsample(clip.aligned_backward[t], clip.corrected[t], clamp_output));
  }
  return clip;
}

std::vector<Tensor> BvsrIkModel::restore_sequence(const std::vector<Tensor>& lr_frames) const {
  const int window = config_.frames();
  const int total = static_cast<int>(lr_frames.size());
  if (total < window) {
    throw ValidationError("restore_sequence: " + std::to_string(total) + " frames, need at least " +
                          std::to_string(window));
  }
  NoGradGuard no_grad;
  std::vector<Tensor> out(total);
  std::vector<bool> done(total, false);
  for (int start = 0; start < total; start += window) {
    const int begin = std::min(start, total - window);
    const std::vector<Tensor> chunk(lr_frames.begin() + begin, lr_frames.begin() + begin + window);
    const ClipTensors result = forward(chunk, true);
    for (int k = 0; k < window; ++k) {
      if (!done[begin + k]) {
        out[begin + k] = result.sr[k].value();
        done[begin + k] = true;
      }
    }
  }
  return out;
}

}  // namespace bvsrik
