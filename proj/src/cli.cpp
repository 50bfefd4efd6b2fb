#include "bvsrik/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>

#include "bvsrik/checkpoint.hpp"
#include "bvsrik/config.hpp"
#include "bvsrik/degradation.hpp"
#include "bvsrik/error.hpp"
#include "bvsrik/evaluation.hpp"
#include "bvsrik/plot.hpp"
#include "bvsrik/selftest.hpp"
#include "bvsrik/training.hpp"

namespace bvsrik {

namespace fs = std::filesystem;

namespace {

struct Invocation {
  std::string config_file;
  std::map<std::string, std::string> values;
  std::map<std::string, bool> flags;
  std::map<std::string, CLI::Option*> options;
};

void add_config_options(CLI::App& app, Invocation& inv) {
  app.add_option("--config", inv.config_file, "key=value config file");
  for (const auto& spec : RunConfig::schema()) {
    const std::string name = "--" + spec.key;
    if (spec.kind == RunConfig::Kind::boolean) {
      inv.options[spec.key] = app.add_flag(name, inv.flags[spec.key], spec.help);
    } else {
      inv.options[spec.key] = app.add_option(name, inv.values[spec.key], spec.help);
    }
  }
}

RunConfig resolve_config(const Invocation& inv) {
  RunConfig run;
  if (!inv.config_file.empty()) run.load_file(inv.config_file);
  run.apply_environment();
  for (const auto& [key, option] : inv.options) {
    if (option->count() == 0) continue;
    const auto flag = inv.flags.find(key);
    run.set(key, flag != inv.flags.end() ? (flag->second ? "true" : "false") : inv.values.at(key), Source::flag);
  }
  return run;
}

const std::string& require_key(const RunConfig& run, const std::string& key, const std::string& command) {
  const std::string& v = run.get(key);
  if (v.empty()) throw ConfigError(command + " needs --" + key);
  return v;
}

void write_text(const fs::path& file, const std::string& text) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream os(file);
  if (!os) throw IoError("cannot write " + file.string());
  os << text;
}

int run_degrade(const RunConfig& run, std::ostream& out) {
  const fs::path in = require_key(run, "in", "degrade");
  const fs::path root = run.get("out");
  const ClipTriplet triplet = make_triplet(load_sequence(in), parse_scenario(run.get("scenario")),
                                           static_cast<std::uint64_t>(run.get_int("seed")), run.get_real("noise"));
  write_triplet(triplet, root);
  write_text(root / "config.txt", run.describe());
  out << "wrote " << triplet.lr.size() << " frame triplets to " << root.string() << '\n';
  return 0;
}

int run_train(const RunConfig& run, std::ostream& out) {
  const fs::path data = require_key(run, "data", "train");
  const fs::path dir = run.get("out");
  BvsrIkModel model(run.model_config(), make_flow_estimator(run.get("flow")));
  out << "parameters: " << model.parameters().parameter_count() << '\n';
  Trainer trainer(model, load_dataset(data), run.train_config(), run.loss_config());
  if (!run.get("resume").empty()) {
    trainer.resume(run.get("resume"));
    out << "resumed at step " << trainer.step_index() << '\n';
  }
  fs::create_directories(dir);
  write_text(dir / "config.txt", run.describe());
  out << "training for " << trainer.total_steps() << " steps\n";
  trainer.run(dir, run.to_json(), [&](std::int64_t step, Real loss, Real lr) {
    char line[96];
    std::snprintf(line, sizeof line, "step %lld loss %.6f lr %.3e", static_cast<long long>(step), loss, lr);
    out << line << '\n' << std::flush;
  });
  nlohmann::ordered_json losses = trainer.losses();
  write_text(dir / "losses.json", losses.dump() + "\n");
  if (run.get_bool("plot")) write_line_plot({{trainer.losses(), {0.1, 0.3, 0.8}}}, dir / "loss.png");
  out << "checkpoint " << (dir / "checkpoint.bin").string() << '\n';
  return 0;
}

std::unique_ptr<BvsrIkModel> model_for(const RunConfig& run, const std::string& command) {
  const fs::path ckpt = require_key(run, "checkpoint", command);
  const ModelConfig expected = run.model_config();
  return load_model(ckpt, make_flow_estimator(run.get("flow")), run.model_overridden() ? &expected : nullptr);
}

int run_infer(const RunConfig& run, std::ostream& out) {
  const fs::path in = require_key(run, "in", "infer");
  const fs::path dir = run.get("out");
  const auto model = model_for(run, "infer");
  const std::vector<Tensor> lr = load_sequence(in);
  save_sequence(model->restore_sequence(lr), dir);
  if (run.get_bool("dump_alignment")) {
    NoGradGuard no_grad;
    const int window = model->config().frames();
    const ClipTensors clip = model->forward(std::vector<Tensor>(lr.begin(), lr.begin() + window), true);
    for (int t = 0; t < window; ++t) {
      const Tensor& f = clip.aligned_backward[t].value();
      const int c = f.dim(0), h = f.dim(1), w = f.dim(2);
      Tensor mean({1, h, w});
      for (int k = 0; k < c; ++k)
        for (int p = 0; p < h * w; ++p) mean[p] += f[static_cast<std::size_t>(k) * h * w + p] / c;
      Real lo = mean.storage().front(), hi = lo;
      for (Real v : mean.storage()) lo = std::min(lo, v), hi = std::max(hi, v);
      for (Real& v : mean.storage()) v = hi > lo ? (v - lo) / (hi - lo) : 0.5;
      char name[40];
      std::snprintf(name, sizeof name, "aligned_%04d.png", t);
      fs::create_directories(dir / "alignment");
      save_gray_png(mean, dir / "alignment" / name);
    }
  }
  out << "wrote " << lr.size() << " frames to " << dir.string() << '\n';
  return 0;
}

int run_eval(RunConfig run, std::ostream& out) {
  const fs::path data = require_key(run, "data", "eval");
  const fs::path dir = run.get("out");
  const auto flow = make_flow_estimator(run.get("flow"));
  MetricsReport report;
  if (run.get_bool("bypass")) {
    report = evaluate(nullptr, load_dataset(data), *flow);
    report.config_fingerprint = fingerprint_hex(run.model_config().fingerprint());
  } else {
    const auto model = model_for(run, "eval");
    run.adopt_model(model->config(), Source::file);
    report = evaluate(model.get(), load_dataset(data), *flow);
    report.checkpoint_id = checkpoint_id(run.get("checkpoint"));
  }
  report.run_config = run.to_json();
  write_report(report, dir / "report.json");
  if (run.get_bool("plot")) write_report_plots(report, dir);
  char line[128];
  std::snprintf(line, sizeof line, "psnr_y %.4f  ssim %.4f  tof %.4f  (bicubic psnr_y %.4f)", report.aggregate.psnr_y,
                report.aggregate.ssim, report.aggregate.tof, report.aggregate.bicubic_psnr_y);
  out << line << '\n' << "report " << (dir / "report.json").string() << '\n';
  return 0;
}

}  // namespace

std::string error_class(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "ConfigError";
  if (dynamic_cast<const ValidationError*>(&e)) return "ValidationError";
  if (dynamic_cast<const ContractViolation*>(&e)) return "ContractViolation";
  if (dynamic_cast<const IoError*>(&e)) return "IoError";
  if (dynamic_cast<const TrainingError*>(&e)) return "TrainingError";
  if (dynamic_cast<const FlowEstimationError*>(&e)) return "FlowEstimationError";
  if (dynamic_cast<const CLI::ParseError*>(&e)) return "UsageError";
  return "RuntimeError";
}

int parse_and_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Blind video super-resolution with implicit kernels"};
  app.require_subcommand(1);
  const std::vector<std::string> names = {"degrade", "train", "infer", "eval", "selftest"};
  const std::map<std::string, std::string> help = {
      {"degrade", "synthesize lr/dn/gt triplets from a GT frame directory"},
      {"train", "train on a dataset of triplets"},
      {"infer", "restore a directory of LR frames"},
      {"eval", "evaluate a checkpoint and write a JSON report"},
      {"selftest", "run the built-in numerical checks"}};
  std::map<std::string, Invocation> invocations;
  std::map<std::string, CLI::App*> commands;
  for (const std::string& name : names) {
    commands[name] = app.add_subcommand(name, help.at(name));
    add_config_options(*commands[name], invocations[name]);
  }

  auto fail = [&](const std::string& cls, std::string message) {
    std::replace(message.begin(), message.end(), '\n', ' ');
    err << "error[" << cls << "]: " << message << '\n';
  };
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    fail("UsageError", e.what());
    return 2;
  }

  try {
    for (const std::string& name : names) {
      if (!commands[name]->parsed()) continue;
      RunConfig run = resolve_config(invocations[name]);
      run.resolve();
      out << "# resolved config\n" << run.describe() << std::flush;
      if (name == "degrade") return run_degrade(run, out);
      if (name == "train") return run_train(run, out);
      if (name == "infer") return run_infer(run, out);
      if (name == "eval") return run_eval(run, out);
      const fs::path dump = run.source("out") >= Source::file ? fs::path(run.get("out")) / "atoms" : fs::path();
      return run_selftest(out, dump) == 0 ? 0 : 1;
    }
  } catch (const std::exception& e) {
    fail(error_class(e), e.what());
    const std::string cls = error_class(e);
    return cls == "ConfigError" || cls == "ValidationError" ? 2 : 1;
  }
  return 1;
}

}  // namespace bvsrik
