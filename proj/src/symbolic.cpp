#include "a2s/symbolic.hpp"

#include <algorithm>
#include <string>

#include "a2s/error.hpp"

namespace a2s {

SegmentScore SegmentScore::from_notes(std::vector<NoteEvent> notes) {
  std::vector<NoteEvent> kept;
  kept.reserve(notes.size());
  for (auto n : notes) {
    if (n.onset_step < 0 || n.onset_step >= kSegmentSteps) continue;
    if (n.pitch < 0 || n.pitch >= kPitchCount) continue;
    if (n.duration_steps < 1) n.duration_steps = 1;
    n.duration_steps = std::min(n.duration_steps, kSegmentSteps - n.onset_step);
    kept.push_back(n);
  }
  std::sort(kept.begin(), kept.end());
  SegmentScore score;
  for (const auto& n : kept) {
    if (!score.notes_.empty() && score.notes_.back().onset_step == n.onset_step &&
        score.notes_.back().pitch == n.pitch) {
      // sorted ascending by duration, so the later one is longer
      score.notes_.back().duration_steps = n.duration_steps;
      continue;
    }
    score.notes_.push_back(n);
  }
  // A re-struck pitch cuts the previous note of that pitch short.
  std::array<int, kPitchCount> next_onset;
  next_onset.fill(kSegmentSteps);
  for (auto it = score.notes_.rbegin(); it != score.notes_.rend(); ++it) {
    it->duration_steps = std::min(it->duration_steps, next_onset[it->pitch] - it->onset_step);
    next_onset[it->pitch] = it->onset_step;
  }
  return score;
}

bool ChordFrame::is_no_chord() const {
  return std::none_of(chroma.begin(), chroma.end(), [](auto v) { return v != 0; });
}

std::array<double, kChordFrameDim> ChordFrame::to_vector() const {
  std::array<double, kChordFrameDim> v{};
  for (int i = 0; i < 12; ++i) {
    v[i] = root[i];
    v[12 + i] = chroma[i];
    v[24 + i] = bass[i];
  }
  return v;
}

int ChordFrame::root_class() const {
  return static_cast<int>(std::max_element(root.begin(), root.end()) - root.begin());
}

int ChordFrame::bass_class() const {
  return static_cast<int>(std::max_element(bass.begin(), bass.end()) - bass.begin());
}

PianoRoll score_to_pianoroll(const SegmentScore& score) {
  PianoRoll roll;
  for (const auto& n : score.notes()) {
    roll.onset[n.onset_step][n.pitch] = 1;
    for (int t = n.onset_step; t < n.onset_step + n.duration_steps; ++t) roll.sustain[t][n.pitch] = 1;
  }
  return roll;
}

SegmentScore pianoroll_to_score(const PianoRoll& roll) {
  std::vector<NoteEvent> notes;
  for (int p = 0; p < kPitchCount; ++p) {
    int t = 0;
    while (t < kSegmentSteps) {
      if (roll.onset[t][p]) {
        if (!roll.sustain[t][p]) {
          throw Error(ErrorCode::MalformedRoll,
                      "onset without sustain at step " + std::to_string(t) + ", pitch " + std::to_string(p));
        }
        int end = t + 1;
        while (end < kSegmentSteps && roll.sustain[end][p] && !roll.onset[end][p]) ++end;
        notes.push_back({t, p, end - t});
        t = end;
      } else if (roll.sustain[t][p]) {
        throw Error(ErrorCode::MalformedRoll,
                    "sustain without onset at step " + std::to_string(t) + ", pitch " + std::to_string(p));
      } else {
        ++t;
      }
    }
  }
  return SegmentScore::from_notes(std::move(notes));
}

SegmentScore transpose(const SegmentScore& score, int semitones) {
  std::vector<NoteEvent> out;
  out.reserve(score.size());
  for (auto n : score.notes()) {
    n.pitch += semitones;
    if (n.pitch < 0 || n.pitch >= kPitchCount) continue;
    out.push_back(n);
  }
  return SegmentScore::from_notes(std::move(out));
}

namespace {

std::array<std::uint8_t, 12> rotate12(const std::array<std::uint8_t, 12>& v, int semitones) {
  const int k = ((semitones % 12) + 12) % 12;
  std::array<std::uint8_t, 12> out{};
  for (int i = 0; i < 12; ++i) out[(i + k) % 12] = v[i];
  return out;
}

}  // namespace

ChordProgression transpose_chord(const ChordProgression& prog, int semitones) {
  ChordProgression out;
  for (std::size_t i = 0; i < prog.frames.size(); ++i) {
    out.frames[i].root = rotate12(prog.frames[i].root, semitones);
    out.frames[i].chroma = rotate12(prog.frames[i].chroma, semitones);
    out.frames[i].bass = rotate12(prog.frames[i].bass, semitones);
  }
  return out;
}

std::array<int, kSegmentSteps> onset_counts(const SegmentScore& score) {
  std::array<int, kSegmentSteps> counts{};
  for (const auto& n : score.notes()) ++counts[n.onset_step];
  return counts;
}

FeatureSeries extract_bass_onset(const SegmentScore& score) {
  FeatureSeries s{};
  for (const auto& n : score.notes()) {
    if (n.pitch < kBassPitchLimit) s[n.onset_step] = 1.0;
  }
  return s;
}

FeatureSeries extract_melody_onset(const SegmentScore& melody) {
  FeatureSeries s{};
  for (const auto& n : melody.notes()) s[n.onset_step] = 1.0;
  return s;
}

FeatureSeries extract_rhythmic_intensity(const SegmentScore& score) {
  const auto counts = onset_counts(score);
  FeatureSeries s{};
  for (int t = 0; t < kSegmentSteps; ++t) {
    s[t] = static_cast<double>(std::min(counts[t], kIntensityNormalizer)) / kIntensityNormalizer;
  }
  return s;
}

SymbolicFeatures extract_features(const SegmentScore& arrangement, const SegmentScore& melody) {
  return {extract_bass_onset(arrangement), extract_melody_onset(melody), extract_rhythmic_intensity(arrangement)};
}

}  // namespace a2s
