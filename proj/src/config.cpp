#include "bvsrik/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "bvsrik/degradation.hpp"
#include "bvsrik/error.hpp"
#include "bvsrik/flow.hpp"

namespace bvsrik {

namespace {

using Kind = RunConfig::Kind;

const std::vector<std::string> kModelKeys = {"channels", "scales", "atoms", "radius", "extract_blocks",
                                             "upsample_blocks", "seed", "no_isc", "no_ita", "no_rec",
                                             "no_bidir"};

// Preset-dependent keys; the schema fallback for them is empty.
const std::map<std::string, std::map<std::string, std::string>> kPresets = {
    {"desk",
     {{"channels", "16"}, {"scales", "3"}, {"atoms", "4"}, {"radius", "1"}, {"extract_blocks", "4"},
      {"upsample_blocks", "6"}, {"lr", "1e-3"}, {"epochs", "250"}, {"batch", "1"}, {"patch", "64"}}},
    {"full",
     {{"channels", "64"}, {"scales", "7"}, {"atoms", "8"}, {"radius", "2"}, {"extract_blocks", "8"},
      {"upsample_blocks", "13"}, {"lr", "1e-4"}, {"epochs", "400"}, {"batch", "7"}, {"patch", "256"}}},
};

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

bool parse_bool(const std::string& v, bool& out) {
  std::string s = v;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "true" || s == "1" || s == "yes" || s == "on") return out = true, true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return out = false, true;
  return false;
}

void check_value(const RunConfig::KeySpec& spec, const std::string& value) {
  if (value.empty()) return;
  std::size_t used = 0;
  bool ok = true;
  try {
    switch (spec.kind) {
      case Kind::integer:
        std::stoll(value, &used);
        ok = used == value.size();
        break;
      case Kind::real:
        std::stod(value, &used);
        ok = used == value.size();
        break;
      case Kind::boolean: {
        bool b;
        ok = parse_bool(value, b);
        break;
      }
      case Kind::text:
        break;
    }
  } catch (const std::exception&) {
    ok = false;
  }
  if (!ok) throw ConfigError("config key '" + spec.key + "': cannot parse '" + value + "'");
}

}  // namespace

std::string source_name(Source source) {
  switch (source) {
    case Source::default_value: return "default";
    case Source::preset: return "preset";
    case Source::file: return "file";
    case Source::env: return "env";
    case Source::flag: return "flag";
  }
  return "?";
}

const std::vector<RunConfig::KeySpec>& RunConfig::schema() {
  static const std::vector<KeySpec> keys = {
      {"preset", Kind::text, "desk", "width/schedule preset: desk|full"},
      {"channels", Kind::integer, "", "feature channels C_f"},
      {"scales", Kind::integer, "", "dictionary scales R"},
      {"atoms", Kind::integer, "", "atoms per scale N"},
      {"radius", Kind::integer, "", "temporal radius M (clips of 2M+1 frames)"},
      {"extract_blocks", Kind::integer, "", "feature-extraction residual blocks N1"},
      {"upsample_blocks", Kind::integer, "", "reconstruction residual blocks N2"},
      {"seed", Kind::integer, "0", "seed for initialization, sampling and degradation"},
      {"no_isc", Kind::boolean, "false", "ablation: skip spatial correction"},
      {"no_ita", Kind::boolean, "false", "ablation: skip temporal kernel filtering"},
      {"no_rec", Kind::boolean, "false", "ablation: no long-term hidden state"},
      {"no_bidir", Kind::boolean, "false", "ablation: forward propagation only"},
      {"no_lc", Kind::boolean, "false", "ablation: drop the correction loss"},
      {"lambda", Kind::real, "0.2", "correction loss weight"},
      {"charbonnier_eps", Kind::real, "0.001", "Charbonnier epsilon"},
      {"lr", Kind::real, "", "initial learning rate"},
      {"lr_min", Kind::real, "1e-7", "cosine floor"},
      {"epochs", Kind::integer, "", "epochs"},
      {"batch", Kind::integer, "", "windows per optimizer step"},
      {"patch", Kind::integer, "", "GT patch side (multiple of 16)"},
      {"max_steps", Kind::integer, "0", "cap on optimizer steps (0: none)"},
      {"grad_clip", Kind::real, "10", "global gradient-norm clip"},
      {"checkpoint_every", Kind::integer, "0", "steps between checkpoints (0: end only)"},
      {"log_every", Kind::integer, "10", "steps between log lines"},
      {"flow", Kind::text, "classical", "flow estimator: classical|zero"},
      {"scenario", Kind::text, "gaussian", "degradation: gaussian|motion"},
      {"noise", Kind::real, "0", "additive noise sigma on the 0..255 scale"},
      {"in", Kind::text, "", "input frame directory"},
      {"out", Kind::text, "runs", "output root"},
      {"data", Kind::text, "", "dataset root of lr/dn/gt triplets"},
      {"checkpoint", Kind::text, "", "checkpoint file"},
      {"resume", Kind::text, "", "checkpoint to resume training from"},
      {"plot", Kind::boolean, "false", "write PNG plots"},
      {"bypass", Kind::boolean, "false", "evaluate GT against itself"},
      {"dump_alignment", Kind::boolean, "false", "write aligned feature maps during inference"},
  };
  return keys;
}

const RunConfig::KeySpec* RunConfig::find(const std::string& key) {
  for (const KeySpec& spec : schema())
    if (spec.key == key) return &spec;
  return nullptr;
}

RunConfig::RunConfig() {
  for (const KeySpec& spec : schema()) fields_[spec.key] = {spec.fallback, Source::default_value};
}

void RunConfig::set(const std::string& key, const std::string& value, Source source) {
  const KeySpec* spec = find(key);
  if (!spec) throw ConfigError("unknown config key '" + key + "'");
  check_value(*spec, value);
  Field& field = fields_[key];
  if (source < field.source) return;
  field = {value, source};
}

void RunConfig::load_file(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw ConfigError("cannot read config file " + file.string());
  std::string line;
  int number = 0;
  while (std::getline(is, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(file.string() + ":" + std::to_string(number) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    try {
      set(key, trim(line.substr(eq + 1)), Source::file);
    } catch (const ConfigError& e) {
      throw ConfigError(file.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

void RunConfig::apply_environment() {
  if (const char* root = std::getenv(kOutputRootEnv); root && *root) set("out", root, Source::env);
}

void RunConfig::resolve() {
  const auto preset = kPresets.find(get("preset"));
  if (preset == kPresets.end()) throw ConfigError("unknown preset '" + get("preset") + "' (expected desk|full)");
  for (const auto& [key, value] : preset->second) {
    if (source(key) == Source::default_value) fields_[key] = {value, Source::preset};
  }
  for (const KeySpec& spec : schema()) check_value(spec, get(spec.key));
  try {
    make_flow_estimator(get("flow"));
    parse_scenario(get("scenario"));
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  if (get_real("noise") < 0) throw ConfigError("noise must be >= 0");
  if (get_bool("no_ita") && get_bool("dump_alignment")) {
    throw ConfigError("dump_alignment requests ITA features but no_ita disables them");
  }
  try {
    model_config().validate();
    loss_config().validate();
    train_config().validate();
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = fields_.find(key);
  if (it == fields_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second.value;
}

Source RunConfig::source(const std::string& key) const {
  const auto it = fields_.find(key);
  if (it == fields_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second.source;
}

std::int64_t RunConfig::get_int(const std::string& key) const {
  const std::string& v = get(key);
  if (v.empty()) throw ConfigError("config key '" + key + "' is unset");
  return std::stoll(v);
}

Real RunConfig::get_real(const std::string& key) const {
  const std::string& v = get(key);
  if (v.empty()) throw ConfigError("config key '" + key + "' is unset");
  return std::stod(v);
}

bool RunConfig::get_bool(const std::string& key) const {
  bool b = false;
  if (!parse_bool(get(key), b)) throw ConfigError("config key '" + key + "' is not a boolean");
  return b;
}

ModelConfig RunConfig::model_config() const {
  ModelConfig c;
  c.channels = static_cast<int>(get_int("channels"));
  c.scales = static_cast<int>(get_int("scales"));
  c.atoms = static_cast<int>(get_int("atoms"));
  c.radius = static_cast<int>(get_int("radius"));
  c.extract_blocks = static_cast<int>(get_int("extract_blocks"));
  c.upsample_blocks = static_cast<int>(get_int("upsample_blocks"));
  c.seed = static_cast<std::uint64_t>(get_int("seed"));
  c.ablation.no_isc = get_bool("no_isc");
  c.ablation.no_ita = get_bool("no_ita");
  c.ablation.no_rec = get_bool("no_rec");
  c.ablation.no_bidir = get_bool("no_bidir");
  return c;
}

LossConfig RunConfig::loss_config() const {
  LossConfig c;
  c.lambda = get_real("lambda");
  c.charbonnier_eps = get_real("charbonnier_eps");
  c.use_correction = !get_bool("no_lc");
  return c;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig c;
  c.lr = get_real("lr");
  c.lr_min = get_real("lr_min");
  c.epochs = static_cast<int>(get_int("epochs"));
  c.batch = static_cast<int>(get_int("batch"));
  c.patch = static_cast<int>(get_int("patch"));
  c.max_steps = get_int("max_steps");
  c.seed = static_cast<std::uint64_t>(get_int("seed"));
  c.grad_clip = get_real("grad_clip");
  c.checkpoint_every = static_cast<int>(get_int("checkpoint_every"));
  c.log_every = static_cast<int>(get_int("log_every"));
  return c;
}

bool RunConfig::model_overridden() const {
  return std::any_of(kModelKeys.begin(), kModelKeys.end(),
                     [&](const std::string& key) { return source(key) >= Source::file; }) ||
         source("preset") >= Source::file;
}

void RunConfig::adopt_model(const ModelConfig& c, Source source) {
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  set("channels", std::to_string(c.channels), source);
  set("scales", std::to_string(c.scales), source);
  set("atoms", std::to_string(c.atoms), source);
  set("radius", std::to_string(c.radius), source);
  set("extract_blocks", std::to_string(c.extract_blocks), source);
  set("upsample_blocks", std::to_string(c.upsample_blocks), source);
  set("seed", std::to_string(c.seed), source);
  set("no_isc", b(c.ablation.no_isc), source);
  set("no_ita", b(c.ablation.no_ita), source);
  set("no_rec", b(c.ablation.no_rec), source);
  set("no_bidir", b(c.ablation.no_bidir), source);
}

std::string RunConfig::describe() const {
  std::ostringstream os;
  for (const KeySpec& spec : schema()) {
    const Field& f = fields_.at(spec.key);
    os << spec.key << " = " << f.value << "  # " << source_name(f.source) << '\n';
  }
  return os.str();
}

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  for (const KeySpec& spec : schema()) j[spec.key] = fields_.at(spec.key).value;
  return j;
}

}  // namespace bvsrik
