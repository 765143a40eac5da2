#pragma once

// Single-file checkpoints: architecture echo, training config, curriculum
// position, parameters and optimizer moments.

#include <filesystem>
#include <map>
#include <string>

#include "a2s/config.hpp"
#include "a2s/model.hpp"

namespace a2s {

inline constexpr const char* kCheckpointMagic = "A2SCKPT1";

struct AdamState {
  long t = 0;
  std::map<std::string, Mat> m;
  std::map<std::string, Mat> v;
};

struct TrainingPosition {
  long step = 0;   // optimizer steps completed
  long epoch = 0;  // epochs completed
  Stage stage = Stage::Warmup;
  bool reached_finetune = false;
};

struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  TrainingPosition position;
  std::map<std::string, Mat> params;
  AdamState adam;
};

void save_checkpoint(const std::filesystem::path& path, const Model& model, const TrainConfig& train,
                     const TrainingPosition& position, const AdamState& adam);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies parameters into `model`; ConfigMismatch when the architectures differ.
void restore_params(Model& model, const Checkpoint& ckpt);

// Builds a model from the checkpoint. When `expected` is given and differs
// from the stored architecture, throws ConfigMismatch unless `force`.
std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& ckpt, const ModelConfig* expected = nullptr,
                                             bool force = false);

}  // namespace a2s
