#include "a2s/fixture.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "a2s/io_util.hpp"
#include "a2s/midi.hpp"
#include "a2s/wav.hpp"

namespace a2s {

namespace fs = std::filesystem;

namespace {

const char* const kRootNames[12] = {"C", "Db", "D", "Eb", "E", "F", "F#", "G", "Ab", "A", "Bb", "B"};
const char* const kQualities[] = {"maj", "min", "7", "min7", "maj7"};

enum Texture { kBlock, kArpeggio, kAlberti, kOffbeat, kTextureCount };

// Chord tones placed in [lo, lo + 12), ascending.
std::vector<int> voicing(const ChordFrame& f, int lo) {
  std::vector<int> out;
  for (int pc = 0; pc < 12; ++pc) {
    if (f.chroma[pc]) out.push_back(lo + ((pc - lo) % 12 + 12) % 12);
  }
  std::sort(out.begin(), out.end());
  return out;
}

double time_of_step(double step, const BeatGrid& beats) {
  const double beat = step / kStepsPerBeat;
  const auto n = static_cast<long>(beats.size());
  long i = static_cast<long>(std::floor(beat));
  i = std::clamp(i, 0L, n - 2);
  const double span = beats.beat_times[i + 1] - beats.beat_times[i];
  return beats.beat_times[i] + (beat - static_cast<double>(i)) * span;
}

void texture_notes(Texture tex, const ChordFrame& chord, std::int64_t beat_step, std::vector<GridNote>& out) {
  const auto tones = voicing(chord, 55);
  const int bass = 36 + chord.root_class();
  if (tones.empty()) return;
  switch (tex) {
    case kBlock:
      out.push_back({beat_step, bass, 4});
      for (int p : tones) out.push_back({beat_step, p, 4});
      break;
    case kArpeggio:
      out.push_back({beat_step, bass, 4});
      out.push_back({beat_step, tones[0], 2});
      out.push_back({beat_step + 2, tones[std::min<std::size_t>(1, tones.size() - 1)], 2});
      break;
    case kAlberti: {
      const int low = tones.front(), high = tones.back(), mid = tones[tones.size() / 2];
      const int pattern[4] = {low, high, mid, high};
      out.push_back({beat_step, bass, 2});
      for (int k = 0; k < 4; ++k) out.push_back({beat_step + k, pattern[k], 1});
      break;
    }
    case kOffbeat:
      out.push_back({beat_step, bass, 2});
      for (int p : tones) out.push_back({beat_step + 2, p, 2});
      break;
    default: break;
  }
}

}  // namespace

FixtureSong make_fixture_song(const std::string& song_id, int segments, Rng& rng, const FixtureOptions& opt) {
  FixtureSong song;
  song.song_id = song_id;
  song.bpm = rng.uniform(opt.min_bpm, opt.max_bpm);
  const int n_beats = segments * kBeatsPerSegment;

  double t = 0.25;
  for (int b = 0; b < n_beats; ++b) {
    song.beats.beat_times.push_back(t);
    song.beats.downbeat.push_back(b % 4 == 0);
    t += 60.0 / song.bpm * (1.0 + opt.tempo_jitter * rng.uniform(-1.0, 1.0));
  }

  std::vector<ChordFrame> per_beat(n_beats);
  for (int b = 0; b < n_beats; b += 2) {
    const int root = static_cast<int>(rng.below(12));
    const auto* quality = kQualities[rng.below(std::size(kQualities))];
    std::string label = std::string(kRootNames[root]) + ":" + quality;
    song.chords.push_back({static_cast<double>(b), static_cast<double>(std::min(b + 2, n_beats)), label});
    const auto frame = parse_chord_label(label);
    per_beat[b] = frame;
    if (b + 1 < n_beats) per_beat[b + 1] = frame;
  }

  for (int s = 0; s < segments; ++s) {
    const auto tex = static_cast<Texture>(rng.below(kTextureCount));
    for (int i = 0; i < kBeatsPerSegment; ++i) {
      const int b = s * kBeatsPerSegment + i;
      const std::int64_t step = static_cast<std::int64_t>(b) * kStepsPerBeat;
      texture_notes(tex, per_beat[b], step, song.accompaniment);
      const auto tones = voicing(per_beat[b], 72);
      if (!tones.empty()) {
        const int pitch = tones[rng.below(tones.size())];
        if (rng.bernoulli(0.5)) {
          song.melody.push_back({step, pitch, 4});
        } else {
          song.melody.push_back({step, pitch, 2});
          song.melody.push_back({step + 2, tones[rng.below(tones.size())], 2});
        }
      }
    }
  }

  std::vector<GridNote> all = song.accompaniment;
  all.insert(all.end(), song.melody.begin(), song.melody.end());
  song.audio = render_notes(all, song.beats, opt.sample_rate, 1.0);
  return song;
}

Waveform render_notes(const std::vector<GridNote>& notes, const BeatGrid& beats, int sample_rate, double tail_seconds) {
  double end = beats.beat_times.empty() ? 0.0 : beats.beat_times.back();
  for (const auto& n : notes) end = std::max(end, time_of_step(static_cast<double>(n.onset_step + n.duration_steps), beats));
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.assign(static_cast<std::size_t>((end + tail_seconds) * sample_rate), 0.0);
  const double release = 0.03;
  for (const auto& n : notes) {
    const double t0 = time_of_step(static_cast<double>(n.onset_step), beats);
    const double t1 = time_of_step(static_cast<double>(n.onset_step + n.duration_steps), beats);
    const double freq = 440.0 * std::pow(2.0, (n.pitch - 69) / 12.0);
    const auto i0 = static_cast<std::size_t>(t0 * sample_rate);
    const auto i1 = std::min(w.samples.size(), static_cast<std::size_t>((t1 + release) * sample_rate));
    for (std::size_t i = i0; i < i1; ++i) {
      const double dt = static_cast<double>(i) / sample_rate - t0;
      double env = std::exp(-3.0 * dt) * std::min(1.0, dt / 0.005);
      if (dt > t1 - t0) env *= std::max(0.0, 1.0 - (dt - (t1 - t0)) / release);
      double v = 0.0;
      for (int h = 1; h <= 4; ++h) {
        if (freq * h >= 0.45 * sample_rate) break;
        v += std::sin(2.0 * std::numbers::pi * freq * h * dt) / h;
      }
      w.samples[i] += 0.08 * env * v;
    }
  }
  for (auto& s : w.samples) s = std::clamp(s, -1.0, 1.0);
  return w;
}

fs::path write_fixture(const fs::path& dir, const FixtureOptions& opt) {
  fs::create_directories(dir);
  std::vector<SongAsset> assets;
  for (int k = 0; k < opt.songs; ++k) {
    char id[32];
    std::snprintf(id, sizeof id, "song%03d", k);
    Rng rng = Rng::derive({opt.seed, static_cast<std::uint64_t>(k)});
    const auto song = make_fixture_song(id, opt.segments_per_song, rng, opt);
    const auto song_dir = dir / id;
    fs::create_directories(song_dir);
    SongAsset a{id,
                song_dir / "audio.wav",
                song_dir / "accompaniment.mid",
                song_dir / "melody.mid",
                song_dir / "beats.txt",
                song_dir / "chords.txt",
                Meter::FourFour};
    const int n_beats = static_cast<int>(song.beats.size());
    write_wav(a.audio, song.audio);
    write_midi(a.midi_acc, song.accompaniment, n_beats);
    write_midi(a.midi_mel, song.melody, n_beats);
    write_text_atomic(a.beats, song.beats.serialize());
    write_text_atomic(a.chords, ChordAnnotation(song.chords).serialize());
    assets.push_back(std::move(a));
  }
  const auto manifest = dir / "manifest.csv";
  save_manifest(manifest, assets);
  return manifest;
}

}  // namespace a2s
