#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "bvsrik/model.hpp"

namespace bvsrik {

// Single-file container:
//   "BVSRIKCK" | u32 version | u64 header bytes | JSON header | raw f64 blob
// The header lists every tensor as {name, shape, offset} (offset in doubles).

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::ordered_json header;
  std::map<std::string, Tensor> tensors;
};

void write_checkpoint(const std::filesystem::path& file, nlohmann::ordered_json header,
                      const std::map<std::string, Tensor>& tensors);
Checkpoint read_checkpoint(const std::filesystem::path& file);

/// FNV-1a of the file bytes, as 16 hex digits.
std::string checkpoint_id(const std::filesystem::path& file);

nlohmann::ordered_json model_config_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Header fields identifying the model: model_fingerprint and model.
nlohmann::ordered_json model_header(const ModelConfig& config);

/// Parameters stored as "param/<name>".
std::map<std::string, Tensor> model_tensors(const BvsrIkModel& model);
/// Copies stored parameters into the model. A fingerprint mismatch raises
/// ConfigError naming both fingerprints; missing or mis-shaped tensors raise
/// IoError.
void load_model_tensors(const Checkpoint& ckpt, BvsrIkModel& model);

/// Model rebuilt from the stored config (or `expected` when given, which
/// must match) with the stored parameters.
std::unique_ptr<BvsrIkModel> load_model(const std::filesystem::path& file,
                                        std::shared_ptr<const FlowEstimator> flow,
                                        const ModelConfig* expected = nullptr);

}  // namespace bvsrik
