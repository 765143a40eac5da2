#pragma once

// Chord labels in Harte syntax (`root:shorthand(extensions)/bass`) and the
// beat-indexed chord annotation file.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "a2s/symbolic.hpp"

namespace a2s {

// Parses one label into a per-beat frame. `N` and `X` map to the no-chord
// frame: empty chroma with root and bass one-hot at pitch class 0.
ChordFrame parse_chord_label(std::string_view label);

ChordFrame no_chord_frame();

struct ChordSpan {
  double start_beat = 0.0;
  double end_beat = 0.0;
  std::string label;
};

class ChordAnnotation {
 public:
  ChordAnnotation() = default;
  explicit ChordAnnotation(std::vector<ChordSpan> spans);

  // Lines of `start_beat<TAB>end_beat<TAB>label`; blank lines and `#` comments skipped.
  static ChordAnnotation parse(std::string_view text);
  static ChordAnnotation load(const std::filesystem::path& path);
  std::string serialize() const;

  const std::vector<ChordSpan>& spans() const { return spans_; }

  // Frames for beats [start_beat, start_beat + 8). Throws AnnotationGap if a
  // beat is not covered by any span.
  ChordProgression progression_at(int start_beat) const;

 private:
  std::vector<ChordSpan> spans_;
};

}  // namespace a2s
