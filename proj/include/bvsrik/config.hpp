#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bvsrik/model.hpp"
#include "bvsrik/training.hpp"

namespace bvsrik {

/// Where a resolved value came from, lowest precedence first.
enum class Source { default_value, preset, file, env, flag };
std::string source_name(Source source);

/// Environment variable that overrides the output root.
inline constexpr const char* kOutputRootEnv = "BVSRIK_OUTPUT_ROOT";

/// Flat key=value run configuration. A write only lands when its source
/// ranks at least as high as the current one, so flags beat the environment,
/// which beats the file, which beats preset and built-in defaults.
class RunConfig {
 public:
  enum class Kind { integer, real, boolean, text };
  struct KeySpec {
    std::string key;
    Kind kind;
    std::string fallback;
    std::string help;
  };
  struct Field {
    std::string value;
    Source source = Source::default_value;
  };

  RunConfig();

  static const std::vector<KeySpec>& schema();
  static const KeySpec* find(const std::string& key);

  /// Unknown keys and malformed values raise ConfigError.
  void set(const std::string& key, const std::string& value, Source source);
  /// Parses "key = value" lines; '#' starts a comment.
  void load_file(const std::filesystem::path& file);
  void apply_environment();
  /// Fills preset-dependent keys still at their defaults, then validates.
  void resolve();

  const std::string& get(const std::string& key) const;
  Source source(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  Real get_real(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  ModelConfig model_config() const;
  LossConfig loss_config() const;
  TrainConfig train_config() const;

  /// True when any key that shapes the model was set by file, env or flag.
  bool model_overridden() const;
  /// Sets model keys from a stored config, at the given source.
  void adopt_model(const ModelConfig& config, Source source);

  /// "key = value  # source" lines in schema order.
  std::string describe() const;
  nlohmann::ordered_json to_json() const;

 private:
  std::map<std::string, Field> fields_;
};

}  // namespace bvsrik
