#pragma once

// Symbolic data types for one 8-beat segment on a quarter-beat grid, plus the
// ground-truth feature extractors that condition the arrangement decoder.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace a2s {

inline constexpr int kStepsPerBeat = 4;
inline constexpr int kBeatsPerSegment = 8;
inline constexpr int kSegmentSteps = kStepsPerBeat * kBeatsPerSegment;  // 32
inline constexpr int kPitchCount = 128;
inline constexpr int kChordFrameDim = 36;
inline constexpr int kBassPitchLimit = 48;        // bass onset: pitch strictly below
inline constexpr int kIntensityNormalizer = 8;    // rhythmic intensity constant

struct NoteEvent {
  int onset_step = 0;
  int pitch = 0;
  int duration_steps = 1;

  friend bool operator==(const NoteEvent&, const NoteEvent&) = default;
  friend auto operator<=>(const NoteEvent& a, const NoteEvent& b) {
    if (auto c = a.onset_step <=> b.onset_step; c != 0) return c;
    if (auto c = a.pitch <=> b.pitch; c != 0) return c;
    return a.duration_steps <=> b.duration_steps;
  }
};

// One 8-beat segment. Notes are kept sorted by (onset_step, pitch) with no
// duplicate (onset_step, pitch) pairs; use the factory to canonicalize.
class SegmentScore {
 public:
  SegmentScore() = default;

  // Sorts, clips notes crossing the segment end, drops notes outside the grid
  // or MIDI range, merges duplicate (onset, pitch) keeping the longer, and
  // cuts a note short where the same pitch is struck again.
  static SegmentScore from_notes(std::vector<NoteEvent> notes);

  const std::vector<NoteEvent>& notes() const { return notes_; }
  std::size_t size() const { return notes_.size(); }
  bool empty() const { return notes_.empty(); }
  static constexpr int n_steps() { return kSegmentSteps; }

  friend bool operator==(const SegmentScore&, const SegmentScore&) = default;

 private:
  std::vector<NoteEvent> notes_;
};

using StepGrid = std::array<std::array<std::uint8_t, kPitchCount>, kSegmentSteps>;

struct PianoRoll {
  StepGrid onset{};
  StepGrid sustain{};

  friend bool operator==(const PianoRoll&, const PianoRoll&) = default;
};

struct ChordFrame {
  std::array<std::uint8_t, 12> root{};
  std::array<std::uint8_t, 12> chroma{};
  std::array<std::uint8_t, 12> bass{};

  bool is_no_chord() const;
  std::array<double, kChordFrameDim> to_vector() const;
  int root_class() const;
  int bass_class() const;

  friend bool operator==(const ChordFrame&, const ChordFrame&) = default;
};

struct ChordProgression {
  std::array<ChordFrame, kBeatsPerSegment> frames{};

  friend bool operator==(const ChordProgression&, const ChordProgression&) = default;
};

using FeatureSeries = std::array<double, kSegmentSteps>;

struct SymbolicFeatures {
  FeatureSeries bass_onset{};
  FeatureSeries melody_onset{};
  FeatureSeries rhythmic_intensity{};

  friend bool operator==(const SymbolicFeatures&, const SymbolicFeatures&) = default;
};

PianoRoll score_to_pianoroll(const SegmentScore& score);

// Throws Error(MalformedRoll) when a sustain cell has no onset or sustained
// predecessor, or an onset cell lacks its sustain bit.
SegmentScore pianoroll_to_score(const PianoRoll& roll);

// Shifts every pitch; notes leaving [0,128) are dropped.
SegmentScore transpose(const SegmentScore& score, int semitones);

ChordProgression transpose_chord(const ChordProgression& prog, int semitones);

FeatureSeries extract_bass_onset(const SegmentScore& score);
FeatureSeries extract_melody_onset(const SegmentScore& melody);
FeatureSeries extract_rhythmic_intensity(const SegmentScore& score);

SymbolicFeatures extract_features(const SegmentScore& arrangement, const SegmentScore& melody);

// Column-wise onset count per step.
std::array<int, kSegmentSteps> onset_counts(const SegmentScore& score);

}  // namespace a2s
