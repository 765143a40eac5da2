#pragma once

// Song assets, 8-beat segmentation, song-level splits, key augmentation and
// the per-song shard files written by `a2s prepare`.

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "a2s/audio_frontend.hpp"
#include "a2s/chords.hpp"
#include "a2s/midi.hpp"
#include "a2s/symbolic.hpp"

namespace a2s {

enum class Meter { FourFour, TwoFour };

Meter parse_meter(const std::string& s);
const char* to_string(Meter m);

struct SongAsset {
  std::string song_id;
  std::filesystem::path audio;
  std::filesystem::path midi_acc;
  std::filesystem::path midi_mel;
  std::filesystem::path beats;
  std::filesystem::path chords;
  Meter meter = Meter::FourFour;

  // Throws IoError naming the first missing file.
  void validate() const;
};

// CSV with header `song_id,audio,midi_acc,midi_mel,beats,chords,meter`.
// Relative paths resolve against the manifest's directory.
std::vector<SongAsset> load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const std::vector<SongAsset>& songs);

struct TrainingExample {
  std::string song_id;
  int segment_index = 0;
  int start_beat = 0;
  int transposition = 0;

  // Shared between the 12 transposed copies; the audio is never transposed.
  std::shared_ptr<const TranscriberEmbedding> embedding;
  std::shared_ptr<const AudioSegment> audio;  // kept only when embeddings are deferred

  ChordProgression chords;
  SegmentScore arrangement;
  SegmentScore melody;
  SymbolicFeatures features;
};

// In-memory form of one song, for callers that already decoded the files.
struct SongData {
  std::string song_id;
  Waveform audio;
  BeatGrid beats;
  ChordAnnotation chords;
  MidiFile accompaniment;
  MidiFile melody;
};

SongData load_song(const SongAsset& asset);

// First beat of every 8-beat window: the first downbeat, then hops of 8,
// re-syncing to the next downbeat whenever a hop lands off one. Only windows
// whose end beat lies on the grid (after appending one extrapolated beat) count.
std::vector<int> segment_starts(const BeatGrid& grid);

// When `backend` is null the stretched audio is kept and no embedding computed.
// Throws AlignmentError when either MIDI file's length differs from the
// annotated beat count by more than one beat; AnnotationGap on chord gaps.
std::vector<TrainingExample> segment_song(const SongData& song, const TranscriberBackend* backend);
std::vector<TrainingExample> segment_song(const SongAsset& asset, const TranscriberBackend* backend);

struct Split {
  std::vector<TrainingExample> train;
  std::vector<TrainingExample> test;
  std::vector<std::string> train_songs;
  std::vector<std::string> test_songs;
};

// Shuffles the sorted distinct song ids with `seed` and keeps round(f * n) for training.
Split split_by_song(const std::vector<TrainingExample>& examples, double train_fraction, std::uint64_t seed);

inline constexpr int kLowestTransposition = -5;
inline constexpr int kHighestTransposition = 6;

// Twelve copies per example (k = -5..+6) of the symbolic sides with features
// re-extracted. Notes pushed outside 0..127 are dropped.
std::vector<TrainingExample> augment_transpositions(const std::vector<TrainingExample>& examples);

// Fills in the embedding of every example that only carries audio, using an
// on-disk cache when `cache_dir` is non-empty.
void ensure_embeddings(std::vector<TrainingExample>& examples, const TranscriberBackend& backend,
                       const std::filesystem::path& cache_dir = {});

// Shard layout: "A2S1", u32 version, u64 header length, JSON header, then the
// float32 payload (embedding or audio per example) referenced from the header.
inline constexpr std::uint32_t kShardVersion = 1;

void write_shard(const std::filesystem::path& path, const std::vector<TrainingExample>& examples);
// Throws DataError on a malformed shard or when stored features disagree with
// the extractor outputs.
std::vector<TrainingExample> read_shard(const std::filesystem::path& path);

struct PrepareSummary {
  std::size_t songs = 0;
  std::size_t examples = 0;
  std::vector<std::string> train_songs;
  std::vector<std::string> test_songs;
};

// Writes one `<song_id>.a2s` shard per song plus `index.json` (shard list and
// the song-level split) into `out_dir`.
PrepareSummary prepare_dataset(const std::vector<SongAsset>& songs, const std::filesystem::path& out_dir,
                               const TranscriberBackend* backend, double train_fraction, std::uint64_t seed);

struct LoadedDataset {
  std::vector<TrainingExample> train;
  std::vector<TrainingExample> test;
};

// Reads `index.json` and every shard it names, then splits as recorded.
LoadedDataset load_prepared(const std::filesystem::path& dir);

}  // namespace a2s
