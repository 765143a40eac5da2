#include "a2s/checkpoint.hpp"

#include "a2s/error.hpp"
#include "a2s/tensor_file.hpp"

namespace a2s {

void save_checkpoint(const std::filesystem::path& path, const Model& model, const TrainConfig& train,
                     const TrainingPosition& position, const AdamState& adam) {
  TensorFile f;
  f.meta = {{"format", kCheckpointMagic},
            {"model", model.config().to_json()},
            {"train", train.to_json()},
            {"step", position.step},
            {"epoch", position.epoch},
            {"stage", to_string(position.stage)},
            {"reached_finetune", position.reached_finetune},
            {"adam_t", adam.t}};
  const auto& store = model.params();
  for (const auto& name : store.names()) f.tensors.push_back({"param/" + name, store.get(name).value()});
  for (const auto& [name, m] : adam.m) f.tensors.push_back({"adam_m/" + name, m});
  for (const auto& [name, v] : adam.v) f.tensors.push_back({"adam_v/" + name, v});
  save_tensor_file(path, kCheckpointMagic, f);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw Error(ErrorCode::IoError, "checkpoint not found: " + path.string());
  const auto f = load_tensor_file(path, kCheckpointMagic);
  Checkpoint c;
  try {
    c.model = ModelConfig::from_json(f.meta.at("model"));
    c.train = TrainConfig::from_json(f.meta.at("train"));
    c.position.step = f.meta.at("step");
    c.position.epoch = f.meta.at("epoch");
    c.position.stage = parse_stage(f.meta.at("stage").get<std::string>());
    c.position.reached_finetune = f.meta.at("reached_finetune");
    c.adam.t = f.meta.at("adam_t");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::DataError, path.string() + ": malformed checkpoint header (" + e.what() + ")");
  }
  for (const auto& t : f.tensors) {
    const auto slash = t.name.find('/');
    const auto kind = t.name.substr(0, slash);
    const auto name = t.name.substr(slash + 1);
    if (kind == "param") c.params[name] = t.value;
    else if (kind == "adam_m") c.adam.m[name] = t.value;
    else if (kind == "adam_v") c.adam.v[name] = t.value;
    else throw Error(ErrorCode::DataError, path.string() + ": unexpected tensor " + t.name);
  }
  return c;
}

void restore_params(Model& model, const Checkpoint& ckpt) {
  if (!model.config().same_architecture(ckpt.model)) {
    throw Error(ErrorCode::ConfigMismatch, "checkpoint architecture differs from the model");
  }
  auto& store = model.params();
  if (ckpt.params.size() != store.size()) throw Error(ErrorCode::ConfigMismatch, "checkpoint parameter count differs");
  for (const auto& name : store.names()) {
    auto it = ckpt.params.find(name);
    if (it == ckpt.params.end()) throw Error(ErrorCode::ConfigMismatch, "checkpoint lacks parameter " + name);
    auto& dst = store.get(name).mutable_value();
    if (dst.rows() != it->second.rows() || dst.cols() != it->second.cols()) {
      throw Error(ErrorCode::ConfigMismatch, "checkpoint shape differs for " + name);
    }
    dst = it->second;
  }
}

std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& ckpt, const ModelConfig* expected, bool force) {
  if (expected && !expected->same_architecture(ckpt.model) && !force) {
    throw Error(ErrorCode::ConfigMismatch, "checkpoint architecture does not match the requested config (use --force)");
  }
  auto model = std::make_unique<Model>(ckpt.model);
  restore_params(*model, ckpt);
  return model;
}

}  // namespace a2s
