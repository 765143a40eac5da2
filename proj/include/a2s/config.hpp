#pragma once

// Key/value configuration files (`key = value`, optional `[section]` headers
// prefixing later keys, `#` comments) and the resolved training config.

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "a2s/corruption.hpp"
#include "a2s/model.hpp"

namespace a2s {

class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text, const std::string& origin = "<config>");
  static KeyValueConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  std::optional<std::string> get(const std::string& key) const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

enum class FinetuneMode { Prior, Autoregressive };

const char* to_string(FinetuneMode m);
FinetuneMode parse_finetune_mode(const std::string& s);

struct TrainConfig {
  int batch_size = 64;
  double lr_start = 4e-4;
  double lr_end = 6e-4;
  std::string lr_schedule = "linear";  // or "constant"
  double grad_clip = 10.0;
  std::uint64_t seed = 0;
  int log_every = 10;
  bool augment = true;

  std::array<long, 3> stage_epochs{5, 15, 10};
  std::optional<std::array<long, 3>> stage_steps;  // overrides epochs when set
  FinetuneMode finetune_mode = FinetuneMode::Prior;

  CorruptionSpec corruption;
  ModelConfig model;

  double weight_arrangement = 1.0;
  double weight_chord = 1.0;
  double weight_features = 1.0;

  bool precompute_embeddings = true;
  bool transpose_audio = false;
  std::string transcriber_backend = "stub";
  std::filesystem::path transcriber_weights;
  bool transcriber_freeze = true;

  // Unknown keys are a UsageError; malformed values a UsageError naming the key.
  static TrainConfig from_kv(const KeyValueConfig& kv);
  // Resolved config in the same key/value syntax, every key listed.
  std::string to_text() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);

  // Throws UsageError on out-of-range values or unsupported switches.
  void validate() const;
};

}  // namespace a2s
