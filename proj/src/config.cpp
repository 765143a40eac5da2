#include "a2s/config.hpp"

#include <charconv>
#include <functional>
#include <sstream>

#include "a2s/error.hpp"
#include "a2s/io_util.hpp"

namespace a2s {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string unquote(std::string v) {
  if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front()) return v.substr(1, v.size() - 2);
  return v;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw Error(ErrorCode::UsageError, "config key " + key + ": '" + value + "' is not " + expected);
}

long to_long(const std::string& key, const std::string& v) {
  long out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) bad_value(key, v, "an integer");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) bad_value(key, v, "a number");
    return d;
  } catch (const std::logic_error&) {
    bad_value(key, v, "a number");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "a boolean");
}

std::array<long, 3> to_triple(const std::string& key, std::string v) {
  if (!v.empty() && v.front() == '[' && v.back() == ']') v = v.substr(1, v.size() - 2);
  std::array<long, 3> out{};
  std::stringstream ss(v);
  std::string part;
  int n = 0;
  while (std::getline(ss, part, ',')) {
    if (n == 3) bad_value(key, v, "a list of three integers");
    out[n++] = to_long(key, trim(part));
  }
  if (n != 3) bad_value(key, v, "a list of three integers");
  return out;
}

std::string fmt(double d) {
  std::ostringstream o;
  o.precision(17);
  o << d;
  return o.str();
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& origin) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw Error(ErrorCode::UsageError, origin + ":" + std::to_string(line_no) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::UsageError, origin + ":" + std::to_string(line_no) + ": expected key = value");
    }
    auto key = trim(line.substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    cfg.values_[key] = unquote(trim(line.substr(eq + 1)));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw Error(ErrorCode::IoError, "config not found: " + path.string());
  return parse(read_text_file(path), path.string());
}

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

const char* to_string(FinetuneMode m) { return m == FinetuneMode::Prior ? "prior" : "autoregressive"; }

FinetuneMode parse_finetune_mode(const std::string& s) {
  if (s == "prior") return FinetuneMode::Prior;
  if (s == "autoregressive") return FinetuneMode::Autoregressive;
  throw Error(ErrorCode::UsageError, "finetune mode must be prior or autoregressive, got '" + s + "'");
}

TrainConfig TrainConfig::from_kv(const KeyValueConfig& kv) {
  TrainConfig c;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  auto integer = [](auto& field) -> Setter {
    return [&field](const std::string& k, const std::string& v) { field = static_cast<std::decay_t<decltype(field)>>(to_long(k, v)); };
  };
  auto real = [](double& field) -> Setter { return [&field](const std::string& k, const std::string& v) { field = to_double(k, v); }; };
  auto flag = [](bool& field) -> Setter { return [&field](const std::string& k, const std::string& v) { field = to_bool(k, v); }; };
  auto text = [](std::string& field) -> Setter { return [&field](const std::string&, const std::string& v) { field = v; }; };

  const std::map<std::string, Setter> setters = {
      {"train.batch_size", integer(c.batch_size)},
      {"train.lr_start", real(c.lr_start)},
      {"train.lr_end", real(c.lr_end)},
      {"train.seed", [&c](const std::string& k, const std::string& v) { c.seed = static_cast<std::uint64_t>(to_long(k, v)); }},
      {"train.log_every", integer(c.log_every)},
      {"train.augment", flag(c.augment)},
      {"optim.lr_schedule", text(c.lr_schedule)},
      {"optim.grad_clip", real(c.grad_clip)},
      {"curriculum.stage_epochs", [&c](const std::string& k, const std::string& v) { c.stage_epochs = to_triple(k, v); }},
      {"curriculum.stage_steps", [&c](const std::string& k, const std::string& v) { c.stage_steps = to_triple(k, v); }},
      {"curriculum.finetune_mode", [&c](const std::string&, const std::string& v) { c.finetune_mode = parse_finetune_mode(v); }},
      {"corruption.p_base_lo", real(c.corruption.p_base_lo)},
      {"corruption.p_base_hi", real(c.corruption.p_base_hi)},
      {"corruption.pitch_pivot", integer(c.corruption.pitch_pivot)},
      {"corruption.pitch_slope", real(c.corruption.pitch_slope)},
      {"corruption.clamp_lo", real(c.corruption.clamp_lo)},
      {"corruption.clamp_hi", real(c.corruption.clamp_hi)},
      {"corruption.seed", [&c](const std::string& k, const std::string& v) { c.corruption.seed = static_cast<std::uint64_t>(to_long(k, v)); }},
      {"corruption.ramp", flag(c.corruption.ramp)},
      {"model.chord_hidden", integer(c.model.chord_hidden)},
      {"model.conv_channels", integer(c.model.conv_channels)},
      {"model.encoder_hidden", integer(c.model.encoder_hidden)},
      {"model.time_hidden", integer(c.model.time_hidden)},
      {"model.note_hidden", integer(c.model.note_hidden)},
      {"model.note_embed", integer(c.model.note_embed)},
      {"model.feature_hidden", integer(c.model.feature_hidden)},
      {"model.max_notes", integer(c.model.max_notes)},
      {"model.init_seed", [&c](const std::string& k, const std::string& v) { c.model.init_seed = static_cast<std::uint64_t>(to_long(k, v)); }},
      {"model.variant", [&c](const std::string&, const std::string& v) { c.model.variant = parse_variant(v); }},
      {"loss.weight_arrangement", real(c.weight_arrangement)},
      {"loss.weight_chord", real(c.weight_chord)},
      {"loss.weight_features", real(c.weight_features)},
      {"dataset.precompute_embeddings", flag(c.precompute_embeddings)},
      {"dataset.transpose_audio", flag(c.transpose_audio)},
      {"transcriber.backend", text(c.transcriber_backend)},
      {"transcriber.weights", [&c](const std::string&, const std::string& v) { c.transcriber_weights = v; }},
      {"transcriber.freeze", flag(c.transcriber_freeze)},
  };
  for (const auto& [key, value] : kv.values()) {
    auto it = setters.find(key);
    if (it == setters.end()) throw Error(ErrorCode::UsageError, "unknown config key " + key);
    it->second(key, value);
  }
  c.validate();
  return c;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::UsageError, msg); };
  if (batch_size < 1) fail("train.batch_size must be positive");
  if (!(lr_start > 0.0) || !(lr_end > 0.0)) fail("learning rates must be positive");
  if (lr_schedule != "linear" && lr_schedule != "constant") fail("optim.lr_schedule must be linear or constant");
  if (!(grad_clip > 0.0)) fail("optim.grad_clip must be positive");
  if (log_every < 1) fail("train.log_every must be positive");
  const auto& stages = stage_steps ? *stage_steps : stage_epochs;
  for (long s : stages) {
    if (s < 1) fail("every curriculum stage needs a positive length");
  }
  if (weight_arrangement < 0 || weight_chord < 0 || weight_features < 0) fail("loss weights must be non-negative");
  if (model.max_notes < 1 || model.chord_hidden < 1 || model.conv_channels < 1 || model.encoder_hidden < 1 ||
      model.time_hidden < 1 || model.note_hidden < 1 || model.note_embed < 1 || model.feature_hidden < 1) {
    fail("model sizes must be positive");
  }
  if (transcriber_backend != "stub" && transcriber_backend != "pretrained") fail("transcriber.backend must be stub or pretrained");
  if (!transcriber_freeze) fail("transcriber.freeze=false is not supported: the transcriber runs outside the trained graph");
  if (transpose_audio) {
    throw Error(ErrorCode::BackendUnavailable, "dataset.transpose_audio requires an external pitch-shifter, none is configured");
  }
  try {
    corruption.validate();
  } catch (const Error& e) {
    fail(e.what());
  }
}

std::string TrainConfig::to_text() const {
  std::ostringstream o;
  auto triple = [](const std::array<long, 3>& t) {
    return "[" + std::to_string(t[0]) + ", " + std::to_string(t[1]) + ", " + std::to_string(t[2]) + "]";
  };
  o << "[train]\n"
    << "batch_size = " << batch_size << "\n"
    << "lr_start = " << fmt(lr_start) << "\n"
    << "lr_end = " << fmt(lr_end) << "\n"
    << "seed = " << seed << "\n"
    << "log_every = " << log_every << "\n"
    << "augment = " << (augment ? "true" : "false") << "\n\n"
    << "[optim]\n"
    << "lr_schedule = " << lr_schedule << "\n"
    << "grad_clip = " << fmt(grad_clip) << "\n\n"
    << "[curriculum]\n"
    << "stage_epochs = " << triple(stage_epochs) << "\n";
  if (stage_steps) o << "stage_steps = " << triple(*stage_steps) << "\n";
  o << "finetune_mode = " << to_string(finetune_mode) << "\n\n"
    << "[corruption]\n"
    << "p_base_lo = " << fmt(corruption.p_base_lo) << "\n"
    << "p_base_hi = " << fmt(corruption.p_base_hi) << "\n"
    << "pitch_pivot = " << corruption.pitch_pivot << "\n"
    << "pitch_slope = " << fmt(corruption.pitch_slope) << "\n"
    << "clamp_lo = " << fmt(corruption.clamp_lo) << "\n"
    << "clamp_hi = " << fmt(corruption.clamp_hi) << "\n"
    << "seed = " << corruption.seed << "\n"
    << "ramp = " << (corruption.ramp ? "true" : "false") << "\n\n"
    << "[model]\n"
    << "chord_hidden = " << model.chord_hidden << "\n"
    << "conv_channels = " << model.conv_channels << "\n"
    << "encoder_hidden = " << model.encoder_hidden << "\n"
    << "time_hidden = " << model.time_hidden << "\n"
    << "note_hidden = " << model.note_hidden << "\n"
    << "note_embed = " << model.note_embed << "\n"
    << "feature_hidden = " << model.feature_hidden << "\n"
    << "max_notes = " << model.max_notes << "\n"
    << "init_seed = " << model.init_seed << "\n"
    << "variant = " << to_string(model.variant) << "\n\n"
    << "[loss]\n"
    << "weight_arrangement = " << fmt(weight_arrangement) << "\n"
    << "weight_chord = " << fmt(weight_chord) << "\n"
    << "weight_features = " << fmt(weight_features) << "\n\n"
    << "[dataset]\n"
    << "precompute_embeddings = " << (precompute_embeddings ? "true" : "false") << "\n"
    << "transpose_audio = " << (transpose_audio ? "true" : "false") << "\n\n"
    << "[transcriber]\n"
    << "backend = " << transcriber_backend << "\n"
    << "weights = \"" << transcriber_weights.string() << "\"\n"
    << "freeze = " << (transcriber_freeze ? "true" : "false") << "\n";
  return o.str();
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j;
  const auto kv = KeyValueConfig::parse(to_text());
  for (const auto& [k, v] : kv.values()) j[k] = v;
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  KeyValueConfig kv;
  for (const auto& [k, v] : j.items()) kv.set(k, v.get<std::string>());
  return from_kv(kv);
}

}  // namespace a2s
