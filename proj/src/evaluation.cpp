#include "bvsrik/evaluation.hpp"

#include <fstream>

#include "bvsrik/checkpoint.hpp"
#include "bvsrik/error.hpp"
#include "bvsrik/metrics.hpp"
#include "bvsrik/plot.hpp"
#include "bvsrik/resize.hpp"

namespace bvsrik {

namespace fs = std::filesystem;

namespace {

nlohmann::ordered_json metrics_json(const ClipMetrics& m) {
  nlohmann::ordered_json j;
  j["name"] = m.name;
  j["frames"] = m.frames;
  j["psnr_y"] = m.psnr_y;
  j["ssim"] = m.ssim;
  j["tof"] = m.tof;
  j["bicubic_psnr_y"] = m.bicubic_psnr_y;
  if (!m.frame_psnr_y.empty()) j["frame_psnr_y"] = m.frame_psnr_y;
  return j;
}

}  // namespace

nlohmann::ordered_json MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["schema_version"] = kReportSchemaVersion;
  j["config_fingerprint"] = config_fingerprint;
  j["checkpoint_id"] = checkpoint_id;
  j["run_config"] = run_config;
  auto list = nlohmann::ordered_json::array();
  for (const ClipMetrics& c : clips) list.push_back(metrics_json(c));
  j["clips"] = std::move(list);
  nlohmann::ordered_json agg = metrics_json(aggregate);
  agg.erase("name");
  j["aggregate"] = std::move(agg);
  return j;
}

ClipMetrics measure_clip(const std::string& name, const std::vector<Tensor>& sr, const std::vector<Tensor>& gt,
                         const std::vector<Tensor>& lr, const FlowEstimator& flow) {
  if (sr.size() != gt.size() || lr.size() != gt.size() || gt.empty()) {
    throw ValidationError("measure_clip: clip " + name + " has mismatched frame counts");
  }
  ClipMetrics m;
  m.name = name;
  m.frames = static_cast<int>(gt.size());
  for (std::size_t t = 0; t < gt.size(); ++t) {
    const Real p = psnr_y(sr[t], gt[t]);
    m.frame_psnr_y.push_back(p);
    m.psnr_y += p;
    m.ssim += ssim_y(sr[t], gt[t]);
    m.bicubic_psnr_y += psnr_y(bicubic_resize(lr[t], gt[t].dim(1), gt[t].dim(2)), gt[t]);
  }
  m.psnr_y /= m.frames;
  m.ssim /= m.frames;
  m.bicubic_psnr_y /= m.frames;
  m.tof = gt.size() >= 2 ? tof(sr, gt, flow) : 0.0;
  return m;
}

MetricsReport evaluate(const BvsrIkModel* model, const std::vector<NamedClip>& clips, const FlowEstimator& flow) {
  if (clips.empty()) throw ValidationError("evaluate: no clips");
  MetricsReport report;
  for (const NamedClip& clip : clips) {
    const ClipTriplet& t = clip.triplet;
    const std::vector<Tensor> sr = model ? model->restore_sequence(t.lr) : t.gt;
    report.clips.push_back(measure_clip(clip.name, sr, t.gt, t.lr, flow));
  }
  ClipMetrics& agg = report.aggregate;
  agg.name = "aggregate";
  for (const ClipMetrics& c : report.clips) {
    agg.frames += c.frames;
    agg.psnr_y += c.psnr_y;
    agg.ssim += c.ssim;
    agg.tof += c.tof;
    agg.bicubic_psnr_y += c.bicubic_psnr_y;
  }
  const Real n = static_cast<Real>(report.clips.size());
  agg.psnr_y /= n;
  agg.ssim /= n;
  agg.tof /= n;
  agg.bicubic_psnr_y /= n;
  if (model) report.config_fingerprint = fingerprint_hex(model->config().fingerprint());
  return report;
}

MetricsReport evaluate(const fs::path& checkpoint, const fs::path& data_root, const FlowEstimator& flow,
                       const ModelConfig* expected) {
  const auto model = load_model(checkpoint, make_flow_estimator(flow.name()), expected);
  MetricsReport report = evaluate(model.get(), load_dataset(data_root), flow);
  report.checkpoint_id = checkpoint_id(checkpoint);
  return report;
}

void write_report(const MetricsReport& report, const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream os(file);
  if (!os) throw IoError("cannot write report " + file.string());
  os << report.to_json().dump(2) << '\n';
}

void write_report_plots(const MetricsReport& report, const fs::path& dir) {
  fs::create_directories(dir);
  PlotSeries psnr, bicubic, ssim_s, tof_s;
  bicubic.color = {0.6, 0.6, 0.6};
  ssim_s.color = {0.1, 0.6, 0.2};
  tof_s.color = {0.8, 0.3, 0.1};
  for (const ClipMetrics& c : report.clips) {
    psnr.values.push_back(c.psnr_y);
    bicubic.values.push_back(c.bicubic_psnr_y);
    ssim_s.values.push_back(c.ssim);
    tof_s.values.push_back(c.tof);
  }
  write_line_plot({bicubic, psnr}, dir / "psnr_y.png");
  write_line_plot({ssim_s}, dir / "ssim.png");
  write_line_plot({tof_s}, dir / "tof.png");
  std::vector<PlotSeries> frames;
  for (const ClipMetrics& c : report.clips) frames.push_back({c.frame_psnr_y, {0.1, 0.3, 0.8}});
  write_line_plot(frames, dir / "psnr_y_frames.png");
}

}  // namespace bvsrik
