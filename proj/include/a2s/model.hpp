#pragma once

// The cross-modal network: chord encoder/decoder, audio- and symbolic-texture
// encoders (strided 2-D convolution followed by a GRU over time), the feature
// predictor fed by the audio-texture latent only, and a hierarchical
// (time-axis then note-axis) arrangement decoder.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "a2s/audio_frontend.hpp"
#include "a2s/autodiff.hpp"
#include "a2s/nn.hpp"
#include "a2s/symbolic.hpp"
#include "json.hpp"

namespace a2s {

inline constexpr int kZChord = 128;
inline constexpr int kZAudio = 192;
inline constexpr int kZSymbolic = 192;
inline constexpr int kZTotal = kZChord + kZAudio + kZSymbolic;
static_assert(kZTotal == 512, "latent concat must be 512-d");

inline constexpr int kConvKernelTime = 4;
inline constexpr int kConvKernelKey = 12;
inline constexpr int kLogVarBound = 10;
inline constexpr int kMaxDuration = kSegmentSteps;

enum class Variant { Full, AudioOnlyVae, AudioOnlyAe, ChordOnly };

const char* to_string(Variant v);
Variant parse_variant(const std::string& s);

struct ModelConfig {
  int chord_hidden = 256;
  int conv_channels = 32;
  int encoder_hidden = 512;
  int time_hidden = 512;
  int note_hidden = 256;
  int note_embed = 64;
  int feature_hidden = 256;
  int max_notes = 16;
  std::uint64_t init_seed = 0;
  Variant variant = Variant::Full;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  // Architecture equality (ignores init_seed).
  bool same_architecture(const ModelConfig& other) const;
};

struct Posterior {
  ad::Var mean;    // B x d
  ad::Var logvar;  // B x d, within (-10, 10)
};

struct ChordLogits {
  ad::Var root;    // (8*B) x 12, rows ordered (frame, batch)
  ad::Var chroma;  // (8*B) x 12
  ad::Var bass;    // (8*B) x 12
};

struct FeaturePrediction {
  ad::Var bass_logits;     // B x 32
  ad::Var melody_logits;   // B x 32
  ad::Var intensity;       // B x 32, clamped to [0,1]

  SymbolicFeatures series(int row) const;
};

// Teacher-forced decoder output. Row layout for per-step tensors is
// (step, batch): row = t * B + b. Per-note tensors stack slots:
// row = s * (32 * B) + t * B + b.
struct DecoderOutput {
  ad::Var contexts;       // (32*B) x time_hidden
  ad::Var count_logits;   // (32*B) x (max_notes + 1)
  ad::Var pitch_logits;   // (S*32*B) x 128, undefined when S == 0
  ad::Var duration_logits;  // (S*32*B) x 32
  std::vector<int> count_targets;
  std::vector<int> pitch_targets;     // -1 where slot is inactive
  std::vector<int> duration_targets;  // duration - 1, or -1
  int slots = 0;
  int batch = 0;
};

struct DecodeOptions {
  bool greedy = true;
  double temperature = 1.0;
  std::uint64_t seed = 0;
};

// Batched inputs. Feature matrices are B x 32 per series.
struct FeatureBatch {
  Mat bass, melody, intensity;
};

FeatureBatch make_feature_batch(const std::vector<SymbolicFeatures>& feats);

// Ground-truth note lists for the decoder: per step, pitch-ascending, at most
// `max_notes` (lowest pitches kept).
std::vector<std::vector<NoteEvent>> notes_by_step(const SegmentScore& score, int max_notes);

class Model {
 public:
  explicit Model(const ModelConfig& config);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  Posterior encode_chord(const std::vector<ChordProgression>& chords) const;
  ChordLogits decode_chord(const ad::Var& z_chd, const std::vector<ChordProgression>& teacher) const;
  // Greedy chord reconstruction (root/bass argmax, chroma > 0.5), teacher-forced.
  std::vector<ChordProgression> reconstruct_chords(const ChordLogits& logits, int batch) const;

  Posterior encode_audio(const std::vector<const TranscriberEmbedding*>& embeddings) const;
  Posterior encode_symbolic(const std::vector<PianoRoll>& rolls) const;

  FeaturePrediction predict_features(const ad::Var& z_aud) const;

  DecoderOutput decode_arrangement(const ad::Var& z, const FeatureBatch& feats,
                                   const std::vector<SegmentScore>& teacher) const;
  std::vector<SegmentScore> sample_arrangement(const ad::Var& z, const FeatureBatch& feats,
                                               const DecodeOptions& options) const;

 private:
  Posterior texture_encode(const std::string& prefix, const Mat& patches, Eigen::Index batch,
                           Eigen::Index time_patches, Eigen::Index key_patches) const;

  ModelConfig config_;
  nn::ParamStore params_;

  // chord encoder / decoder
  nn::Gru chord_fwd_, chord_bwd_;
  nn::Linear chord_mean_, chord_logvar_;
  nn::Linear chord_dec_init_;
  nn::Gru chord_dec_;
  nn::Linear chord_dec_out_;
  // texture encoders
  nn::Linear audio_conv_, sym_conv_;
  nn::Gru audio_gru_, sym_gru_;
  nn::Linear audio_mean_, audio_logvar_, sym_mean_, sym_logvar_;
  // feature predictor
  nn::Linear feat_hidden_, feat_out_;
  // arrangement decoder
  nn::Linear time_init_, time_z_;
  nn::Gru time_gru_;
  nn::Linear count_head_, note_init_;
  ad::Var* pitch_embed_ = nullptr;     // 129 x E (row 128 = start)
  ad::Var* duration_embed_ = nullptr;  // 33 x E (row 32 = start)
  nn::Gru note_gru_;
  nn::Linear pitch_head_, duration_head_;
};

// Patch matrices for the strided convolution. Rows are ordered
// (time_patch, batch, key_patch); columns (channel, dt, dk).
Mat embedding_patches(const std::vector<const TranscriberEmbedding*>& embeddings);
Mat roll_patches(const std::vector<PianoRoll>& rolls);

// Parameter-name prefixes of each network part.
namespace part {
inline constexpr const char* kChordEncoder = "chord_enc.";
inline constexpr const char* kChordDecoder = "chord_dec.";
inline constexpr const char* kAudioEncoder = "audio_enc.";
inline constexpr const char* kSymbolicEncoder = "sym_enc.";
inline constexpr const char* kFeaturePredictor = "feat_pred.";
inline constexpr const char* kArrangementDecoder = "arr_dec.";
}  // namespace part

}  // namespace a2s
