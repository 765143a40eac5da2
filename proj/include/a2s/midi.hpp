#pragma once

// Minimal Standard MIDI File support: read type 0/1, write type 0.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "a2s/symbolic.hpp"

namespace a2s {

struct MidiNote {
  std::int64_t start_tick = 0;
  std::int64_t end_tick = 0;
  int pitch = 0;
  int velocity = 0;
  int channel = 0;
};

struct MidiFile {
  int ticks_per_quarter = 480;
  std::vector<MidiNote> notes;  // all tracks merged, sorted by start tick
  std::int64_t end_tick = 0;    // latest event time over all tracks

  double length_beats() const { return static_cast<double>(end_tick) / ticks_per_quarter; }

  // Notes whose onset falls in beats [start_beat, start_beat + 8), quantized
  // to the quarter-beat grid and clipped at the segment end.
  SegmentScore segment(int start_beat) const;
};

MidiFile parse_midi(const std::vector<std::uint8_t>& bytes);
MidiFile read_midi(const std::filesystem::path& path);

// A note on the global quarter-beat grid of a whole piece.
struct GridNote {
  std::int64_t onset_step = 0;
  int pitch = 0;
  int duration_steps = 1;
};

inline constexpr int kOutputTicksPerQuarter = 480;
inline constexpr int kOutputVelocity = 80;
inline constexpr double kOutputBpm = 95.0;

// Single-track type-0 file at 95 BPM, 4/4, every note at velocity 80.
std::vector<std::uint8_t> encode_midi(const std::vector<GridNote>& notes, int total_beats = 0);
void write_midi(const std::filesystem::path& path, const std::vector<GridNote>& notes, int total_beats = 0);

// Places a segment at `start_beat` on the global grid.
void append_segment(std::vector<GridNote>& out, const SegmentScore& seg, int start_beat);

}  // namespace a2s
