#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "bvsrik/flow.hpp"
#include "bvsrik/hash.hpp"
#include "bvsrik/kernel_dictionary.hpp"
#include "bvsrik/nn.hpp"
#include "bvsrik/recurrent_transformer.hpp"
#include "bvsrik/varying_filter.hpp"

namespace bvsrik {

inline constexpr int kScaleFactor = 4;

struct AblationFlags {
  bool no_isc = false;    // corrected frame = input frame
  bool no_ita = false;    // warped feature goes to fusion unfiltered
  bool no_rec = false;    // no long-term state across time steps
  bool no_bidir = false;  // forward propagation only
};

struct ModelConfig {
  int channels = 64;         // C_f
  int scales = 7;            // R
  int atoms = 8;             // N
  int radius = 2;            // M; clips hold 2M+1 frames
  int extract_blocks = 8;    // N1
  int upsample_blocks = 13;  // N2
  int inr_hidden = 32;
  Real freq_low = 2.0;
  Real freq_high = 16.0;
  Real atom_output_scale = 0.1;
  Real alpha_init = 8.0;
  Real delta_logit_gap = 4.0;
  std::uint64_t seed = 0;
  AblationFlags ablation;

  static ModelConfig full() { return {}; }
  /// Reduced widths for CPU-scale experiments.
  static ModelConfig desk();

  int frames() const { return 2 * radius + 1; }
  void validate() const;
  /// Stable key=value rendering of every field that affects the forward pass.
  std::string canonical() const;
  std::uint64_t fingerprint() const;
};

enum class Direction { forward, backward };

/// Per-clip activations; every vector is indexed by frame.
struct ClipTensors {
  std::vector<Var> lr;
  std::vector<Var> corrected;
  std::vector<CoefficientField> isc_coefficients;  // empty under no_isc
  std::vector<Var> features;
  std::vector<Var> aligned_forward;
  std::vector<Var> aligned_backward;
  std::vector<Var> sr;
};

class BvsrIkModel {
 public:
  explicit BvsrIkModel(ModelConfig config,
                       std::shared_ptr<const FlowEstimator> flow = std::make_shared<ClassicalFlowEstimator>());

  BvsrIkModel(const BvsrIkModel&) = delete;
  BvsrIkModel& operator=(const BvsrIkModel&) = delete;

  const ModelConfig& config() const { return config_; }
  ParameterStore& parameters() { return params_; }
  const ParameterStore& parameters() const { return params_; }
  const std::vector<InrAtom>& atoms() const { return atoms_; }
  const FlowEstimator& flow_estimator() const { return *flow_; }
  void set_flow_estimator(std::shared_ptr<const FlowEstimator> flow) { flow_ = std::move(flow); }

  MultiScaleDictionary dictionary() const { return build_dictionary(atoms_, config_.scales); }

  /// Implicit spatial correction of one (3, H, W) frame.
  std::pair<Var, CoefficientField> isc_correct(const Var& frame, const MultiScaleDictionary& dict) const;
  /// (3, H, W) -> (C_f, H, W).
  Var extract_features(const Var& corrected) const;
  /// One implicit temporal alignment step.
  std::pair<Var, RtState> ita_align(Direction direction, const Var& prev_aligned, const Var& cur_feature,
                                    const Var& flow, const MultiScaleDictionary& dict,
                                    const RtState* long_state) const;
  /// Fills aligned_forward / aligned_backward from corrected frames and features.
  void bidirectional_propagate(ClipTensors& clip, const MultiScaleDictionary& dict) const;
  /// (C_f, H, W) + (3, H, W) -> (3, 4H, 4W); clamps to [0, 1] when requested.
  Var upsample(const Var& aligned, const Var& corrected, bool clamp_output = true) const;

  /// Full pipeline on a clip of 2M+1 (3, H, W) frames with H, W divisible by 4.
  /// Training passes clamp_output = false so the loss sees unclamped values.
  ClipTensors forward(const std::vector<Tensor>& lr_clip, bool clamp_output = true) const;

  /// Restores a sequence of any length >= 2M+1 by running consecutive
  /// (2M+1)-frame windows; no graph is recorded.
  std::vector<Tensor> restore_sequence(const std::vector<Tensor>& lr_frames) const;

 private:
  ModelConfig config_;
  std::shared_ptr<const FlowEstimator> flow_;
  ParameterStore params_;
  std::vector<InrAtom> atoms_;
  Conv2d srt_input_;
  RecurrentTransformer srt_;
  Conv2d extract_first_;
  std::vector<ResidualBlock> extract_blocks_;
  RecurrentTransformer trt_[2];
  Conv2d fusion_[2];
  std::vector<ResidualBlock> up_blocks_;
  Conv2d up_expand1_, up_expand2_, up_out_;
};

}  // namespace bvsrik
