#pragma once

// Beat-synchronous audio front end: per-beat time-scale modification to a
// fixed 95 BPM / 16 kHz segment, and transcriber embeddings (onset, frame and
// velocity piano-roll stacks) computed from that segment.

#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "a2s/wav.hpp"

namespace a2s {

inline constexpr int kSampleRate = 16000;
inline constexpr double kNominalBpm = 95.0;
inline constexpr int kSegmentSamples = 80842;  // round(8 * 60/95 * 16000)
inline constexpr int kStftWindow = 2048;
inline constexpr int kStftHop = 512;
inline constexpr int kEmbedFrames = 158;  // ceil(80842 / 512)
inline constexpr int kPianoKeys = 88;
inline constexpr int kLowestKeyPitch = 21;  // A0
inline constexpr int kEmbedChannels = 3;

struct BeatGrid {
  std::vector<double> beat_times;
  std::vector<bool> downbeat;

  std::size_t size() const { return beat_times.size(); }

  // Lines of `time_seconds<TAB>is_downbeat`.
  static BeatGrid parse(std::string_view text);
  static BeatGrid load(const std::filesystem::path& path);
  std::string serialize() const;

  // Throws DataError unless times are strictly increasing and flags match.
  void validate() const;

  // Copy with one extra beat appended, spaced like the last interval.
  BeatGrid with_extrapolated_end() const;
};

struct AudioSegment {
  std::vector<double> samples;  // exactly kSegmentSamples at kSampleRate
  static constexpr double nominal_bpm = kNominalBpm;
};

// Maps beats [start_beat, start_beat + 8] onto 8 beats at 95 BPM, one
// stretch factor per beat, resampling to 16 kHz first when needed.
// Throws InsufficientBeats / NonDownbeatStart.
AudioSegment stretch_and_resample(const Waveform& raw, const BeatGrid& grid, std::size_t start_beat);

// Phase-vocoder time-scale modification driven by a monotone map from output
// sample position to input sample position.
std::vector<double> phase_vocoder(const std::vector<double>& input, const std::vector<double>& anchor_out,
                                  const std::vector<double>& anchor_in, std::size_t n_out);

class TranscriberEmbedding {
 public:
  enum Channel { kOnset = 0, kFrame = 1, kVelocity = 2 };

  TranscriberEmbedding() : data_(static_cast<std::size_t>(kEmbedChannels) * kEmbedFrames * kPianoKeys, 0.0f) {}

  float at(int channel, int frame, int key) const { return data_[index(channel, frame, key)]; }
  float& at(int channel, int frame, int key) { return data_[index(channel, frame, key)]; }

  const std::vector<float>& data() const { return data_; }
  std::vector<float>& data() { return data_; }

  friend bool operator==(const TranscriberEmbedding&, const TranscriberEmbedding&) = default;

 private:
  static std::size_t index(int c, int t, int k) {
    return (static_cast<std::size_t>(c) * kEmbedFrames + t) * kPianoKeys + k;
  }
  std::vector<float> data_;
};

class TranscriberBackend {
 public:
  virtual ~TranscriberBackend() = default;
  virtual TranscriberEmbedding embed(const AudioSegment& segment) const = 0;
  virtual std::string id() const = 0;
};

// Deterministic filterbank stand-in for a trained transcriber.
class StubTranscriber : public TranscriberBackend {
 public:
  StubTranscriber();
  TranscriberEmbedding embed(const AudioSegment& segment) const override;
  std::string id() const override { return "stub"; }

  // 88 per-key band levels in [0,1] for each STFT frame (the stub's frame matrix).
  std::vector<std::vector<double>> key_levels(const std::vector<double>& samples) const;

 private:
  std::vector<std::vector<std::pair<int, double>>> bands_;  // per key: (bin, weight)
};

// Per-frame sigmoid heads over the stub's key levels, with weights read from a
// tensor container (`onset.weight`, `onset.bias`, `frame.*`, `velocity.*`).
class PretrainedTranscriber : public TranscriberBackend {
 public:
  explicit PretrainedTranscriber(const std::filesystem::path& weights);
  TranscriberEmbedding embed(const AudioSegment& segment) const override;
  std::string id() const override;

 private:
  StubTranscriber features_;
  std::string digest_;
  std::vector<std::vector<double>> weight_[3];  // 88x88 each
  std::vector<double> bias_[3];
};

// `kind` is "stub" or "pretrained"; pretrained throws BackendUnavailable when
// the weights file is missing or unreadable.
std::unique_ptr<TranscriberBackend> make_transcriber(std::string_view kind, const std::filesystem::path& weights = {});

TranscriberEmbedding transcribe_embed(const AudioSegment& segment, const TranscriberBackend& backend);

// Writes a weights file for PretrainedTranscriber whose heads reproduce the
// stub's frame levels through a sharpened identity map.
void write_identity_transcriber_weights(const std::filesystem::path& path);

}  // namespace a2s
