#pragma once

// Synthetic songs for tests and demos: chord progressions, a few
// accompaniment textures, a melody line, additive-synth audio at a non-nominal
// tempo, and the matching beat, chord and MIDI files.

#include <filesystem>
#include <string>
#include <vector>

#include "a2s/chords.hpp"
#include "a2s/dataset.hpp"
#include "a2s/rng.hpp"

namespace a2s {

struct FixtureOptions {
  int songs = 1;
  int segments_per_song = 8;
  std::uint64_t seed = 7;
  int sample_rate = 22050;
  double min_bpm = 100.0;
  double max_bpm = 120.0;
  double tempo_jitter = 0.01;  // relative per-beat spread
};

struct FixtureSong {
  std::string song_id;
  double bpm = 0.0;
  BeatGrid beats;
  std::vector<ChordSpan> chords;
  std::vector<GridNote> accompaniment;
  std::vector<GridNote> melody;
  Waveform audio;
};

FixtureSong make_fixture_song(const std::string& song_id, int segments, Rng& rng, const FixtureOptions& opt);

// Renders notes placed on `beats` (quarter-beat grid) with a harmonic
// decaying-sine voice.
Waveform render_notes(const std::vector<GridNote>& notes, const BeatGrid& beats, int sample_rate, double tail_seconds);

// Writes every song into `dir/<song_id>/` plus `dir/manifest.csv`; returns the manifest path.
std::filesystem::path write_fixture(const std::filesystem::path& dir, const FixtureOptions& opt);

}  // namespace a2s
