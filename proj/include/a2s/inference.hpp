#pragma once

// Audio-to-MIDI arrangement, latent-swap style transfer and ablation runs.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "a2s/checkpoint.hpp"
#include "a2s/dataset.hpp"
#include "a2s/model.hpp"

namespace a2s {

struct ArrangeRequest {
  std::filesystem::path audio;
  std::filesystem::path beats;
  std::filesystem::path chords;
  FinetuneMode mode = FinetuneMode::Prior;
  std::uint64_t seed = 0;
  double temperature = 1.0;
  bool sample = false;       // sample notes instead of greedy argmax
  bool sample_all = false;   // also sample z_chd and z_aud
  bool allow_early = false;  // accept checkpoints that never reached fine-tuning
  // Score used as the first segment's context in autoregressive mode; ignored in prior mode.
  std::optional<std::filesystem::path> symbolic_hint;

  void validate() const;
};

// One segment's conditioning, already in model space.
struct SegmentInput {
  TranscriberEmbedding embedding;
  ChordProgression chords;
  int start_beat = 0;
};

struct ArrangeResult {
  std::vector<int> start_beats;
  std::vector<SegmentScore> segments;
  std::vector<SymbolicFeatures> predicted_features;
  std::vector<std::string> warnings;
  std::vector<std::uint8_t> midi;
  int total_beats = 0;
};

// Slices an audio file into beat-synchronous 8-beat inputs.
std::vector<SegmentInput> load_segments(const std::filesystem::path& audio, const std::filesystem::path& beats,
                                        const std::filesystem::path& chords, const TranscriberBackend& backend);

class Arranger {
 public:
  // Throws CheckpointStageError unless `allow_early` or the checkpoint reached fine-tuning.
  Arranger(const Checkpoint& ckpt, bool allow_early, std::vector<std::string>* warnings = nullptr);
  // Wraps an in-memory model (no stage check).
  explicit Arranger(const Model& model);

  const Model& model() const { return *model_; }

  struct Latents {
    ad::Var z_chd, z_aud;
  };

  // Posterior means of the chord and audio latents (samples when `sample_all`).
  Latents conditioning(const SegmentInput& in, bool sample_all, std::uint64_t seed) const;
  // z_sym from N(0, I) seeded by (seed, segment).
  Mat prior_texture(std::uint64_t seed, int segment) const;
  Mat texture_of(const SegmentScore& score) const;

  // Decodes one segment given the latents and z_sym.
  SegmentScore decode(const Latents& lat, const Mat& z_sym, const DecodeOptions& opt,
                      SymbolicFeatures* predicted = nullptr) const;

  ArrangeResult arrange(const std::vector<SegmentInput>& segments, const ArrangeRequest& req,
                        const std::optional<SegmentScore>& first_context = std::nullopt) const;

  SegmentScore style_transfer_chord(const SegmentInput& source, const ChordProgression& new_chords,
                                    const ArrangeRequest& req, int segment_index = 0) const;
  SegmentScore style_transfer_texture(const SegmentInput& source, const SegmentScore& donor,
                                      const ArrangeRequest& req, int segment_index = 0) const;

 private:
  DecodeOptions options_for(const ArrangeRequest& req, int segment) const;

  std::unique_ptr<Model> owned_;
  const Model* model_ = nullptr;
};

// Reads the request's files with the checkpoint's transcriber and arranges.
ArrangeResult arrange(const ArrangeRequest& req, const Checkpoint& ckpt);

// ConfigMismatch unless the checkpoint was trained as `variant`.
ArrangeResult run_ablation(Variant variant, const ArrangeRequest& req, const Checkpoint& ckpt);

std::unique_ptr<TranscriberBackend> transcriber_for(const TrainConfig& cfg);

}  // namespace a2s
