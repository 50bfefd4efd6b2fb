#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bvsrik/degradation.hpp"
#include "bvsrik/model.hpp"

namespace bvsrik {

struct LossConfig {
  Real lambda = 0.2;
  Real charbonnier_eps = 1e-3;
  bool use_correction = true;  // false drops the lambda * L_C term

  void validate() const;
};

struct TrainConfig {
  Real lr = 1e-4;
  Real lr_min = 1e-7;
  int epochs = 400;
  int batch = 7;
  int patch = 256;         // GT patch side; the LR patch is patch / 4
  std::int64_t max_steps = 0;  // > 0 caps the epoch-derived step count
  std::uint64_t seed = 0;
  Real grad_clip = 10.0;
  int checkpoint_every = 0;  // 0: only at the end
  int log_every = 10;

  void validate() const;
};

/// mean(sqrt((a - b)^2 + eps^2)); shapes must match.
Var charbonnier_loss(const Var& a, const Var& b, Real eps);

/// L_R + lambda * L_C, each term a Charbonnier mean over all frames and
/// elements. L_C is skipped when corrected is empty or use_correction is off.
Var total_loss(const std::vector<Var>& sr, const std::vector<Tensor>& gt, const std::vector<Var>& corrected,
               const std::vector<Tensor>& dn, const LossConfig& cfg);

/// Single cosine from lr (step 0) towards lr_min (step total).
Real cosine_lr(std::int64_t step, std::int64_t total, Real lr, Real lr_min);

/// Rescales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
Real clip_grad_norm(ParameterStore& store, Real max_norm);

class Adam {
 public:
  explicit Adam(ParameterStore& store, Real beta1 = 0.9, Real beta2 = 0.999, Real eps = 1e-8);

  /// One update on every parameter holding a gradient, followed by
  /// projection onto declared lower bounds.
  void step(Real lr);

  std::int64_t steps() const { return t_; }
  void set_steps(std::int64_t t) { t_ = t; }
  std::map<std::string, Tensor>& first_moment() { return m_; }
  std::map<std::string, Tensor>& second_moment() { return v_; }
  const std::map<std::string, Tensor>& first_moment() const { return m_; }
  const std::map<std::string, Tensor>& second_moment() const { return v_; }

 private:
  ParameterStore& store_;
  Real beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

/// A named clip of frames.
struct NamedClip {
  std::string name;
  ClipTriplet triplet;
};

/// A directory holding lr/, dn/, gt/ is one clip; otherwise every
/// subdirectory that holds them is a clip, in name order.
std::vector<NamedClip> load_dataset(const std::filesystem::path& root);

struct TrainingSample {
  std::vector<Tensor> lr, dn, gt;
};

class Trainer {
 public:
  using LogFn = std::function<void(std::int64_t step, Real loss, Real lr)>;

  Trainer(BvsrIkModel& model, std::vector<NamedClip> data, TrainConfig train, LossConfig loss);

  std::int64_t total_steps() const { return total_steps_; }
  std::int64_t step_index() const { return step_; }
  const std::vector<Real>& losses() const { return losses_; }

  /// Random (2M+1)-frame window with paired LR/DN/GT crops.
  TrainingSample sample();
  /// One optimizer step over `batch` accumulated samples; returns the mean loss.
  Real step();
  /// Steps until total_steps; checkpoints into out_dir when requested.
  void run(const std::filesystem::path& out_dir, const nlohmann::ordered_json& run_config, const LogFn& log = {});

  void save(const std::filesystem::path& file, const nlohmann::ordered_json& run_config) const;
  /// Restores parameters, optimizer state, RNG state, step and loss history.
  void resume(const std::filesystem::path& file);

 private:
  BvsrIkModel& model_;
  std::vector<NamedClip> data_;
  TrainConfig train_;
  LossConfig loss_;
  Adam adam_;
  Rng rng_;
  std::int64_t total_steps_ = 0;
  std::int64_t step_ = 0;
  std::vector<Real> losses_;
};

}  // namespace bvsrik
