#include "bvsrik/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "bvsrik/error.hpp"
#include "bvsrik/hash.hpp"

namespace bvsrik {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[8] = {'B', 'V', 'S', 'R', 'I', 'K', 'C', 'K'};

template <typename T>
void write_raw(std::ofstream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_raw(std::ifstream& is, const fs::path& file) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError("truncated checkpoint " + file.string());
  return v;
}

}  // namespace

void write_checkpoint(const fs::path& file, nlohmann::ordered_json header, const std::map<std::string, Tensor>& tensors) {
  auto index = nlohmann::ordered_json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    index.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.size();
  }
  header["format"] = "BVSRIKCK";
  header["tensors"] = std::move(index);
  const std::string text = header.dump();

  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  const fs::path tmp = file.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw IoError("cannot write checkpoint " + tmp.string());
    os.write(kMagic, sizeof kMagic);
    write_raw(os, kCheckpointVersion);
    write_raw(os, static_cast<std::uint64_t>(text.size()));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : tensors) {
      os.write(reinterpret_cast<const char*>(t.ptr()), static_cast<std::streamsize>(t.size() * sizeof(Real)));
    }
    if (!os) throw IoError("failed writing checkpoint " + tmp.string());
  }
  fs::rename(tmp, file);
}

Checkpoint read_checkpoint(const fs::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + file.string());
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw IoError("not a checkpoint file: " + file.string());
  }
  const auto version = read_raw<std::uint32_t>(is, file);
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint " + file.string() + " has version " + std::to_string(version) + ", expected " +
                  std::to_string(kCheckpointVersion));
  }
  const auto length = read_raw<std::uint64_t>(is, file);
  std::string text(length, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(length))) throw IoError("truncated checkpoint " + file.string());

  Checkpoint ckpt;
  try {
    ckpt.header = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt checkpoint header in " + file.string() + ": " + e.what());
  }
  const std::vector<char> blob((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  for (const auto& entry : ckpt.header.at("tensors")) {
    Shape shape = entry.at("shape").get<Shape>();
    const auto offset = entry.at("offset").get<std::uint64_t>();
    Tensor t(shape);
    const std::size_t bytes = t.size() * sizeof(Real);
    if ((offset * sizeof(Real)) + bytes > blob.size()) throw IoError("truncated checkpoint blob in " + file.string());
    std::memcpy(t.ptr(), blob.data() + offset * sizeof(Real), bytes);
    ckpt.tensors.emplace(entry.at("name").get<std::string>(), std::move(t));
  }
  return ckpt;
}

std::string checkpoint_id(const fs::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + file.string());
  const std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return fingerprint_hex(fnv1a64(bytes.data(), bytes.size()));
}

nlohmann::ordered_json model_config_json(const ModelConfig& c) {
  return {{"channels", c.channels},
          {"scales", c.scales},
          {"atoms", c.atoms},
          {"radius", c.radius},
          {"extract_blocks", c.extract_blocks},
          {"upsample_blocks", c.upsample_blocks},
          {"inr_hidden", c.inr_hidden},
          {"freq_low", c.freq_low},
          {"freq_high", c.freq_high},
          {"atom_output_scale", c.atom_output_scale},
          {"alpha_init", c.alpha_init},
          {"delta_logit_gap", c.delta_logit_gap},
          {"seed", c.seed},
          {"no_isc", c.ablation.no_isc},
          {"no_ita", c.ablation.no_ita},
          {"no_rec", c.ablation.no_rec},
          {"no_bidir", c.ablation.no_bidir}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.channels = j.at("channels").get<int>();
    c.scales = j.at("scales").get<int>();
    c.atoms = j.at("atoms").get<int>();
    c.radius = j.at("radius").get<int>();
    c.extract_blocks = j.at("extract_blocks").get<int>();
    c.upsample_blocks = j.at("upsample_blocks").get<int>();
    c.inr_hidden = j.at("inr_hidden").get<int>();
    c.freq_low = j.at("freq_low").get<Real>();
    c.freq_high = j.at("freq_high").get<Real>();
    c.atom_output_scale = j.at("atom_output_scale").get<Real>();
    c.alpha_init = j.at("alpha_init").get<Real>();
    c.delta_logit_gap = j.at("delta_logit_gap").get<Real>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.ablation.no_isc = j.at("no_isc").get<bool>();
    c.ablation.no_ita = j.at("no_ita").get<bool>();
    c.ablation.no_rec = j.at("no_rec").get<bool>();
    c.ablation.no_bidir = j.at("no_bidir").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad model config in checkpoint: ") + e.what());
  }
  return c;
}

std::map<std::string, Tensor> model_tensors(const BvsrIkModel& model) {
  std::map<std::string, Tensor> out;
  for (const auto& entry : model.parameters().entries()) out.emplace("param/" + entry.name, entry.var.value());
  return out;
}

nlohmann::ordered_json model_header(const ModelConfig& config) {
  nlohmann::ordered_json header;
  header["model_fingerprint"] = fingerprint_hex(config.fingerprint());
  header["model"] = model_config_json(config);
  return header;
}

void load_model_tensors(const Checkpoint& ckpt, BvsrIkModel& model) {
  if (!ckpt.header.contains("model_fingerprint")) throw IoError("checkpoint lacks a model fingerprint");
  const std::string stored = ckpt.header.at("model_fingerprint").get<std::string>();
  const std::string actual = fingerprint_hex(model.config().fingerprint());
  if (stored != actual) {
    throw ConfigError("checkpoint model fingerprint " + stored + " does not match configured model " + actual);
  }
  for (auto& entry : model.parameters().entries()) {
    const auto it = ckpt.tensors.find("param/" + entry.name);
    if (it == ckpt.tensors.end()) throw IoError("checkpoint lacks parameter " + entry.name);
    if (!it->second.same_shape(entry.var.value())) {
      throw IoError("checkpoint parameter " + entry.name + " has shape " + shape_str(it->second.shape()) +
                    ", model expects " + shape_str(entry.var.shape()));
    }
    entry.var.mutable_value() = it->second;
  }
}

std::unique_ptr<BvsrIkModel> load_model(const fs::path& file, std::shared_ptr<const FlowEstimator> flow,
                                        const ModelConfig* expected) {
  const Checkpoint ckpt = read_checkpoint(file);
  const ModelConfig config = expected ? *expected : model_config_from_json(ckpt.header.at("model"));
  auto model = std::make_unique<BvsrIkModel>(config, std::move(flow));
  load_model_tensors(ckpt, *model);
  return model;
}

}  // namespace bvsrik
