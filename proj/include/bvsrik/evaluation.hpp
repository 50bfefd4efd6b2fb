#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bvsrik/model.hpp"
#include "bvsrik/training.hpp"

namespace bvsrik {

inline constexpr int kReportSchemaVersion = 1;

struct ClipMetrics {
  std::string name;
  int frames = 0;
  Real psnr_y = 0;
  Real ssim = 0;
  Real tof = 0;
  Real bicubic_psnr_y = 0;  // bicubic x4 of the LR input
  std::vector<Real> frame_psnr_y;
};

struct MetricsReport {
  std::vector<ClipMetrics> clips;
  ClipMetrics aggregate;  // arithmetic means of the per-clip values
  std::string config_fingerprint;
  std::string checkpoint_id;
  nlohmann::ordered_json run_config;

  nlohmann::ordered_json to_json() const;
};

/// Per-frame PSNR-Y / SSIM-Y averaged over the clip, tOF over consecutive pairs.
ClipMetrics measure_clip(const std::string& name, const std::vector<Tensor>& sr, const std::vector<Tensor>& gt,
                         const std::vector<Tensor>& lr, const FlowEstimator& flow);

/// Restores every clip with `model`, or uses GT itself when model is null
/// (bypass), and fills the metric fields of the report.
MetricsReport evaluate(const BvsrIkModel* model, const std::vector<NamedClip>& clips, const FlowEstimator& flow);

/// Loads the checkpoint (checked against `expected` when given) and the
/// dataset, then evaluates.
MetricsReport evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& data_root,
                       const FlowEstimator& flow, const ModelConfig* expected = nullptr);

void write_report(const MetricsReport& report, const std::filesystem::path& file);
/// psnr_y.png, ssim.png and tof.png next to the report.
void write_report_plots(const MetricsReport& report, const std::filesystem::path& dir);

}  // namespace bvsrik
