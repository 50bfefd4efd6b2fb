#include "bvsrik/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "bvsrik/checkpoint.hpp"
#include "bvsrik/error.hpp"
#include "bvsrik/ops.hpp"

namespace bvsrik {

namespace fs = std::filesystem;

void LossConfig::validate() const {
  if (!(lambda >= 0)) throw ValidationError("loss: lambda must be >= 0");
  if (!(charbonnier_eps > 0)) throw ValidationError("loss: charbonnier_eps must be > 0");
}

void TrainConfig::validate() const {
  if (!(lr > 0) || !(lr_min >= 0) || lr_min > lr) throw ValidationError("train: need 0 <= lr_min <= lr, lr > 0");
  if (epochs < 1 || batch < 1) throw ValidationError("train: epochs and batch must be >= 1");
  if (patch < 16 || patch % 16 != 0) throw ValidationError("train: patch must be a positive multiple of 16");
  if (max_steps < 0) throw ValidationError("train: max_steps must be >= 0");
  if (!(grad_clip > 0)) throw ValidationError("train: grad_clip must be positive");
  if (checkpoint_every < 0 || log_every < 0) throw ValidationError("train: intervals must be >= 0");
}

Var charbonnier_loss(const Var& a, const Var& b, Real eps) {
  if (a.shape() != b.shape()) {
    throw ValidationError("charbonnier: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ");
  }
  if (!(eps > 0)) throw ValidationError("charbonnier: eps must be positive");
  return charbonnier(a, b, eps);
}

namespace {

Var clip_charbonnier(const std::vector<Var>& pred, const std::vector<Tensor>& target, Real eps) {
  if (pred.size() != target.size() || pred.empty()) {
    throw ValidationError("loss: " + std::to_string(pred.size()) + " predicted frames vs " +
                          std::to_string(target.size()) + " targets");
  }
  Var total;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    Var term = charbonnier_loss(pred[t], Var::constant(target[t]), eps);
    total = total.defined() ? add(total, term) : term;
  }
  return scale(total, 1.0 / static_cast<Real>(pred.size()));
}

}  // namespace

Var total_loss(const std::vector<Var>& sr, const std::vector<Tensor>& gt, const std::vector<Var>& corrected,
               const std::vector<Tensor>& dn, const LossConfig& cfg) {
  cfg.validate();
  Var loss = clip_charbonnier(sr, gt, cfg.charbonnier_eps);
  if (cfg.use_correction && cfg.lambda > 0 && !corrected.empty()) {
    loss = add(loss, scale(clip_charbonnier(corrected, dn, cfg.charbonnier_eps), cfg.lambda));
  }
  return loss;
}

Real cosine_lr(std::int64_t step, std::int64_t total, Real lr, Real lr_min) {
  if (total <= 0) return lr;
  const Real progress = std::clamp(static_cast<Real>(step) / static_cast<Real>(total), 0.0, 1.0);
  return lr_min + 0.5 * (lr - lr_min) * (1 + std::cos(std::numbers::pi * progress));
}

Real clip_grad_norm(ParameterStore& store, Real max_norm) {
  Real sq = 0;
  for (const auto& entry : store.entries()) {
    const Tensor& g = entry.var.node()->grad;
    for (Real v : g.storage()) sq += v * v;
  }
  const Real norm = std::sqrt(sq);
  if (norm > max_norm && std::isfinite(norm)) {
    const Real factor = max_norm / norm;
    for (auto& entry : store.entries()) entry.var.node()->grad *= factor;
  }
  return norm;
}

Adam::Adam(ParameterStore& store, Real beta1, Real beta2, Real eps)
    : store_(store), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& entry : store_.entries()) {
    m_.emplace(entry.name, Tensor::zeros_like(entry.var.value()));
    v_.emplace(entry.name, Tensor::zeros_like(entry.var.value()));
  }
}

void Adam::step(Real lr) {
  ++t_;
  const Real c1 = 1 - std::pow(beta1_, static_cast<Real>(t_));
  const Real c2 = 1 - std::pow(beta2_, static_cast<Real>(t_));
  for (auto& entry : store_.entries()) {
    const Tensor& g = entry.var.node()->grad;
    if (g.empty()) continue;
    Tensor& m = m_.at(entry.name);
    Tensor& v = v_.at(entry.name);
    Tensor& x = entry.var.mutable_value();
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = beta1_ * m[i] + (1 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1 - beta2_) * g[i] * g[i];
      x[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
    if (entry.lower_bound) {
      for (Real& value : x.storage()) value = std::max(value, *entry.lower_bound);
    }
  }
}

std::vector<NamedClip> load_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw IoError("missing data directory: " + root.string());
  std::vector<NamedClip> clips;
  if (fs::is_directory(root / "lr")) {
    clips.push_back({root.filename().string(), read_triplet(root)});
    return clips;
  }
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::is_directory(entry.path() / "lr")) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  for (const fs::path& dir : dirs) clips.push_back({dir.filename().string(), read_triplet(dir)});
  if (clips.empty()) throw IoError("no lr/dn/gt triplets under " + root.string());
  return clips;
}

Trainer::Trainer(BvsrIkModel& model, std::vector<NamedClip> data, TrainConfig train, LossConfig loss)
    : model_(model), data_(std::move(data)), train_(train), loss_(loss), adam_(model.parameters()), rng_(train.seed) {
  train_.validate();
  loss_.validate();
  if (data_.empty()) throw TrainingError("no training clips");
  const int window = model_.config().frames();
  std::int64_t windows = 0;
  for (const NamedClip& clip : data_) {
    const auto& t = clip.triplet;
    if (t.lr.empty() || t.lr.size() != t.gt.size() || t.lr.size() != t.dn.size()) {
      throw TrainingError("clip " + clip.name + " has inconsistent lr/dn/gt frame counts");
    }
    if (static_cast<int>(t.lr.size()) < window) {
      throw TrainingError("clip " + clip.name + " has " + std::to_string(t.lr.size()) + " frames; need " +
                          std::to_string(window));
    }
    const Tensor& lr = t.lr.front();
    const Tensor& gt = t.gt.front();
    if (gt.dim(1) != kScaleFactor * lr.dim(1) || gt.dim(2) != kScaleFactor * lr.dim(2)) {
      throw TrainingError("clip " + clip.name + ": GT " + shape_str(gt.shape()) + " is not 4x LR " +
                          shape_str(lr.shape()));
    }
    windows += static_cast<std::int64_t>(t.lr.size()) - window + 1;
  }
  const std::int64_t per_epoch = (windows + train_.batch - 1) / train_.batch;
  total_steps_ = per_epoch * train_.epochs;
  if (train_.max_steps > 0) total_steps_ = std::min(total_steps_, train_.max_steps);
}

TrainingSample Trainer::sample() {
  const int window = model_.config().frames();
  const NamedClip& clip = data_[std::uniform_int_distribution<std::size_t>(0, data_.size() - 1)(rng_)];
  const ClipTriplet& t = clip.triplet;
  const int start = std::uniform_int_distribution<int>(0, static_cast<int>(t.lr.size()) - window)(rng_);
  const int h = t.lr.front().dim(1), w = t.lr.front().dim(2);
  const int ph = std::min(train_.patch / kScaleFactor, h), pw = std::min(train_.patch / kScaleFactor, w);
  if (ph % 4 != 0 || pw % 4 != 0) {
    throw TrainingError("clip " + clip.name + ": LR crop " + std::to_string(ph) + "x" + std::to_string(pw) +
                        " not divisible by 4");
  }
  const int y = std::uniform_int_distribution<int>(0, h - ph)(rng_);
  const int x = std::uniform_int_distribution<int>(0, w - pw)(rng_);
  auto crop = [](const Tensor& img, int y0, int x0, int ch, int cw) {
    Tensor out({img.dim(0), ch, cw});
    for (int c = 0; c < img.dim(0); ++c)
      for (int i = 0; i < ch; ++i)
        for (int j = 0; j < cw; ++j) out.at(c, i, j) = img.at(c, y0 + i, x0 + j);
    return out;
  };
  TrainingSample s;
  for (int k = start; k < start + window; ++k) {
    s.lr.push_back(crop(t.lr[k], y, x, ph, pw));
    s.dn.push_back(crop(t.dn[k], y, x, ph, pw));
    s.gt.push_back(crop(t.gt[k], kScaleFactor * y, kScaleFactor * x, kScaleFactor * ph, kScaleFactor * pw));
  }
  return s;
}

Real Trainer::step() {
  ParameterStore& params = model_.parameters();
  params.zero_grad();
  Real total = 0;
  for (int b = 0; b < train_.batch; ++b) {
    const TrainingSample s = sample();
    const ClipTensors out = model_.forward(s.lr, false);
    const Var loss = total_loss(out.sr, s.gt, model_.config().ablation.no_isc ? std::vector<Var>{} : out.corrected,
                                s.dn, loss_);
    const Real value = loss.value().item();
    if (!std::isfinite(value)) {
      throw TrainingError("non-finite loss at step " + std::to_string(step_ + 1));
    }
    total += value;
    backward(scale(loss, 1.0 / train_.batch));
  }
  clip_grad_norm(params, train_.grad_clip);
  adam_.step(cosine_lr(step_, total_steps_, train_.lr, train_.lr_min));
  ++step_;
  const Real mean = total / train_.batch;
  losses_.push_back(mean);
  return mean;
}

void Trainer::run(const fs::path& out_dir, const nlohmann::ordered_json& run_config, const LogFn& log) {
  while (step_ < total_steps_) {
    const Real lr = cosine_lr(step_, total_steps_, train_.lr, train_.lr_min);
    const Real loss = step();
    if (log && (train_.log_every > 0 && (step_ % train_.log_every == 0 || step_ == total_steps_))) log(step_, loss, lr);
    if (train_.checkpoint_every > 0 && step_ % train_.checkpoint_every == 0 && step_ < total_steps_) {
      save(out_dir / "checkpoint.bin", run_config);
    }
  }
  save(out_dir / "checkpoint.bin", run_config);
}

void Trainer::save(const fs::path& file, const nlohmann::ordered_json& run_config) const {
  std::map<std::string, Tensor> tensors = model_tensors(model_);
  for (const auto& [name, t] : adam_.first_moment()) tensors.emplace("adam_m/" + name, t);
  for (const auto& [name, t] : adam_.second_moment()) tensors.emplace("adam_v/" + name, t);
  std::ostringstream rng_state;
  rng_state << rng_;
  nlohmann::ordered_json header = model_header(model_.config());
  header["run_config"] = run_config;
  header["step"] = step_;
  header["total_steps"] = total_steps_;
  header["adam_steps"] = adam_.steps();
  header["rng_state"] = rng_state.str();
  header["loss_history"] = losses_;
  write_checkpoint(file, std::move(header), tensors);
}

void Trainer::resume(const fs::path& file) {
  const Checkpoint ckpt = read_checkpoint(file);
  load_model_tensors(ckpt, model_);
  for (auto* moments : {&adam_.first_moment(), &adam_.second_moment()}) {
    const std::string prefix = moments == &adam_.first_moment() ? "adam_m/" : "adam_v/";
    for (auto& [name, t] : *moments) {
      const auto it = ckpt.tensors.find(prefix + name);
      if (it == ckpt.tensors.end() || !it->second.same_shape(t)) {
        throw IoError("checkpoint " + file.string() + " lacks optimizer state for " + name);
      }
      t = it->second;
    }
  }
  try {
    adam_.set_steps(ckpt.header.at("adam_steps").get<std::int64_t>());
    step_ = ckpt.header.at("step").get<std::int64_t>();
    losses_ = ckpt.header.at("loss_history").get<std::vector<Real>>();
    std::istringstream rng_state(ckpt.header.at("rng_state").get<std::string>());
    rng_state >> rng_;
    if (!rng_state) throw IoError("bad rng state");
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint " + file.string() + " lacks training state: " + e.what());
  }
}

}  // namespace bvsrik
