#include "a2s/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <set>
#include <sstream>

#include "a2s/error.hpp"
#include "a2s/io_util.hpp"
#include "a2s/rng.hpp"
#include "json.hpp"

namespace a2s {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kShardMagic[4] = {'A', '2', 'S', '1'};
const char* const kManifestColumns[] = {"song_id", "audio", "midi_acc", "midi_mel", "beats", "chords", "meter"};

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

json score_to_json(const SegmentScore& s) {
  json a = json::array();
  for (const auto& n : s.notes()) a.push_back({n.onset_step, n.pitch, n.duration_steps});
  return a;
}

SegmentScore score_from_json(const json& a) {
  std::vector<NoteEvent> notes;
  for (const auto& n : a) {
    if (!n.is_array() || n.size() != 3) throw Error(ErrorCode::DataError, "shard note entry must be [onset, pitch, duration]");
    NoteEvent e{n[0].get<int>(), n[1].get<int>(), n[2].get<int>()};
    if (e.onset_step < 0 || e.onset_step >= kSegmentSteps || e.pitch < 0 || e.pitch >= kPitchCount ||
        e.duration_steps < 1 || e.onset_step + e.duration_steps > kSegmentSteps) {
      throw Error(ErrorCode::DataError, "shard note out of range");
    }
    notes.push_back(e);
  }
  auto s = SegmentScore::from_notes(notes);
  if (s.size() != notes.size()) throw Error(ErrorCode::DataError, "shard score is not canonical");
  return s;
}

json chords_to_json(const ChordProgression& c) {
  json a = json::array();
  for (const auto& f : c.frames) {
    json frame = json::array();
    for (double v : f.to_vector()) frame.push_back(static_cast<int>(v));
    a.push_back(frame);
  }
  return a;
}

ChordProgression chords_from_json(const json& a) {
  if (!a.is_array() || a.size() != kBeatsPerSegment) throw Error(ErrorCode::DataError, "shard chord entry needs 8 frames");
  ChordProgression c;
  for (int f = 0; f < kBeatsPerSegment; ++f) {
    const auto& v = a[f];
    if (!v.is_array() || v.size() != kChordFrameDim) throw Error(ErrorCode::DataError, "shard chord frame needs 36 values");
    for (int p = 0; p < 12; ++p) {
      c.frames[f].root[p] = v[p].get<int>() ? 1 : 0;
      c.frames[f].chroma[p] = v[12 + p].get<int>() ? 1 : 0;
      c.frames[f].bass[p] = v[24 + p].get<int>() ? 1 : 0;
    }
  }
  return c;
}

json features_to_json(const SymbolicFeatures& r) {
  return {{"bass_onset", r.bass_onset}, {"melody_onset", r.melody_onset}, {"rhythmic_intensity", r.rhythmic_intensity}};
}

void append_floats(std::vector<std::uint8_t>& out, const float* data, std::size_t n) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(data);
  out.insert(out.end(), p, p + n * sizeof(float));
}

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename T>
T get_le(const std::vector<std::uint8_t>& in, std::size_t at) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(in[at + i]) << (8 * i);
  return v;
}

std::uint64_t audio_digest(const AudioSegment& a, const std::string& backend_id) {
  std::vector<std::uint8_t> bytes(a.samples.size() * sizeof(double));
  std::memcpy(bytes.data(), a.samples.data(), bytes.size());
  const auto h = fnv1a64(bytes);
  const std::vector<std::uint8_t> id(backend_id.begin(), backend_id.end());
  return fnv1a64(id, h);
}

void check_alignment(const MidiFile& midi, std::size_t n_beats, const std::string& what, const std::string& song) {
  if (midi.end_tick == 0 && midi.notes.empty()) return;
  if (std::abs(midi.length_beats() - static_cast<double>(n_beats)) > 1.0) {
    std::ostringstream msg;
    msg << song << ": " << what << " MIDI spans " << midi.length_beats() << " beats but " << n_beats
        << " beats are annotated";
    throw Error(ErrorCode::AlignmentError, msg.str());
  }
}

}  // namespace

Meter parse_meter(const std::string& s) {
  if (s == "4/4") return Meter::FourFour;
  if (s == "2/4") return Meter::TwoFour;
  throw Error(ErrorCode::DataError, "unsupported meter '" + s + "' (expected 4/4 or 2/4)");
}

const char* to_string(Meter m) { return m == Meter::TwoFour ? "2/4" : "4/4"; }

void SongAsset::validate() const {
  for (const auto* p : {&audio, &midi_acc, &midi_mel, &beats, &chords}) {
    if (!fs::is_regular_file(*p)) throw Error(ErrorCode::IoError, "song " + song_id + ": missing file " + p->string());
  }
}

std::vector<SongAsset> load_manifest(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw Error(ErrorCode::IoError, "manifest not found: " + path.string());
  const auto text = read_text_file(path);
  const auto base = path.parent_path();
  std::istringstream in(text);
  std::string line;
  std::vector<SongAsset> songs;
  std::map<std::string, std::size_t> column;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv(line);
    if (column.empty()) {
      for (std::size_t i = 0; i < fields.size(); ++i) column[fields[i]] = i;
      for (const char* c : kManifestColumns) {
        if (!column.count(c)) throw Error(ErrorCode::DataError, path.string() + ": manifest lacks column " + c);
      }
      continue;
    }
    auto field = [&](const char* name) -> std::string {
      const auto i = column.at(name);
      if (i >= fields.size()) {
        throw Error(ErrorCode::DataError, path.string() + ":" + std::to_string(line_no) + ": missing " + name);
      }
      return fields[i];
    };
    auto resolve = [&](const char* name) {
      fs::path p = field(name);
      return p.is_absolute() ? p : base / p;
    };
    SongAsset a;
    a.song_id = field("song_id");
    if (a.song_id.empty()) throw Error(ErrorCode::DataError, path.string() + ":" + std::to_string(line_no) + ": empty song_id");
    a.audio = resolve("audio");
    a.midi_acc = resolve("midi_acc");
    a.midi_mel = resolve("midi_mel");
    a.beats = resolve("beats");
    a.chords = resolve("chords");
    a.meter = parse_meter(field("meter"));
    songs.push_back(std::move(a));
  }
  if (column.empty()) throw Error(ErrorCode::DataError, path.string() + ": empty manifest");
  return songs;
}

void save_manifest(const fs::path& path, const std::vector<SongAsset>& songs) {
  std::ostringstream out;
  out << "song_id,audio,midi_acc,midi_mel,beats,chords,meter\n";
  const auto base = path.parent_path();
  auto rel = [&](const fs::path& p) { return p.lexically_relative(base).generic_string(); };
  for (const auto& s : songs) {
    out << s.song_id << ',' << rel(s.audio) << ',' << rel(s.midi_acc) << ',' << rel(s.midi_mel) << ',' << rel(s.beats)
        << ',' << rel(s.chords) << ',' << to_string(s.meter) << '\n';
  }
  write_text_atomic(path, out.str());
}

SongData load_song(const SongAsset& asset) {
  asset.validate();
  SongData s;
  s.song_id = asset.song_id;
  s.audio = read_wav(asset.audio);
  s.beats = BeatGrid::load(asset.beats);
  s.chords = ChordAnnotation::load(asset.chords);
  s.accompaniment = read_midi(asset.midi_acc);
  s.melody = read_midi(asset.midi_mel);
  return s;
}

std::vector<int> segment_starts(const BeatGrid& grid) {
  std::vector<int> starts;
  const auto ext = grid.with_extrapolated_end();
  const int n = static_cast<int>(grid.size());
  int b = 0;
  while (b < n && !grid.downbeat[b]) ++b;
  while (b + kBeatsPerSegment < static_cast<int>(ext.size())) {
    if (!grid.downbeat[b]) {
      ++b;
      while (b < n && !grid.downbeat[b]) ++b;
      continue;
    }
    starts.push_back(b);
    b += kBeatsPerSegment;
  }
  return starts;
}

std::vector<TrainingExample> segment_song(const SongData& song, const TranscriberBackend* backend) {
  song.beats.validate();
  check_alignment(song.accompaniment, song.beats.size(), "accompaniment", song.song_id);
  check_alignment(song.melody, song.beats.size(), "melody", song.song_id);
  const auto grid = song.beats.with_extrapolated_end();
  std::vector<TrainingExample> out;
  int index = 0;
  for (int start : segment_starts(song.beats)) {
    TrainingExample ex;
    ex.song_id = song.song_id;
    ex.segment_index = index++;
    ex.start_beat = start;
    ex.chords = song.chords.progression_at(start);
    ex.arrangement = song.accompaniment.segment(start);
    ex.melody = song.melody.segment(start);
    ex.features = extract_features(ex.arrangement, ex.melody);
    auto audio = std::make_shared<AudioSegment>(stretch_and_resample(song.audio, grid, static_cast<std::size_t>(start)));
    if (backend) {
      ex.embedding = std::make_shared<TranscriberEmbedding>(transcribe_embed(*audio, *backend));
    } else {
      ex.audio = std::move(audio);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<TrainingExample> segment_song(const SongAsset& asset, const TranscriberBackend* backend) {
  return segment_song(load_song(asset), backend);
}

Split split_by_song(const std::vector<TrainingExample>& examples, double train_fraction, std::uint64_t seed) {
  std::set<std::string> ids;
  for (const auto& e : examples) ids.insert(e.song_id);
  std::vector<std::string> order(ids.begin(), ids.end());
  Rng rng = Rng::derive({seed, 0x5917ULL});
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  const auto n_train = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(order.size())));
  Split s;
  s.train_songs.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(std::min(n_train, order.size())));
  s.test_songs.assign(order.begin() + static_cast<std::ptrdiff_t>(s.train_songs.size()), order.end());
  std::sort(s.train_songs.begin(), s.train_songs.end());
  std::sort(s.test_songs.begin(), s.test_songs.end());
  const std::set<std::string> train_set(s.train_songs.begin(), s.train_songs.end());
  for (const auto& e : examples) (train_set.count(e.song_id) ? s.train : s.test).push_back(e);
  return s;
}

std::vector<TrainingExample> augment_transpositions(const std::vector<TrainingExample>& examples) {
  std::vector<TrainingExample> out;
  out.reserve(examples.size() * (kHighestTransposition - kLowestTransposition + 1));
  for (const auto& e : examples) {
    for (int k = kLowestTransposition; k <= kHighestTransposition; ++k) {
      TrainingExample t = e;
      t.transposition = e.transposition + k;
      t.arrangement = transpose(e.arrangement, k);
      t.melody = transpose(e.melody, k);
      t.chords = transpose_chord(e.chords, k);
      t.features = extract_features(t.arrangement, t.melody);
      out.push_back(std::move(t));
    }
  }
  return out;
}

void ensure_embeddings(std::vector<TrainingExample>& examples, const TranscriberBackend& backend,
                       const fs::path& cache_dir) {
  std::map<const AudioSegment*, std::shared_ptr<const TranscriberEmbedding>> done;
  for (auto& e : examples) {
    if (e.embedding) continue;
    if (!e.audio) throw Error(ErrorCode::DataError, e.song_id + ": example has neither audio nor embedding");
    if (auto it = done.find(e.audio.get()); it != done.end()) {
      e.embedding = it->second;
      continue;
    }
    std::shared_ptr<TranscriberEmbedding> emb;
    fs::path cached;
    if (!cache_dir.empty()) {
      cached = cache_dir / (hex64(audio_digest(*e.audio, backend.id())) + ".emb");
      if (fs::is_regular_file(cached)) {
        const auto bytes = read_file_bytes(cached);
        auto loaded = std::make_shared<TranscriberEmbedding>();
        if (bytes.size() == loaded->data().size() * sizeof(float)) {
          std::memcpy(loaded->data().data(), bytes.data(), bytes.size());
          emb = loaded;
        }
      }
    }
    if (!emb) {
      emb = std::make_shared<TranscriberEmbedding>(transcribe_embed(*e.audio, backend));
      if (!cached.empty()) {
        fs::create_directories(cache_dir);
        const auto* p = reinterpret_cast<const std::uint8_t*>(emb->data().data());
        write_file_atomic(cached, std::span<const std::uint8_t>(p, emb->data().size() * sizeof(float)));
      }
    }
    done[e.audio.get()] = emb;
    e.embedding = std::move(emb);
  }
}

void write_shard(const fs::path& path, const std::vector<TrainingExample>& examples) {
  json header;
  header["version"] = kShardVersion;
  header["examples"] = json::array();
  std::vector<std::uint8_t> payload;
  std::map<const void*, json> blobs;
  for (const auto& e : examples) {
    json j = {{"song_id", e.song_id},
              {"segment_index", e.segment_index},
              {"start_beat", e.start_beat},
              {"transposition", e.transposition},
              {"chords", chords_to_json(e.chords)},
              {"arrangement", score_to_json(e.arrangement)},
              {"melody", score_to_json(e.melody)},
              {"features", features_to_json(e.features)}};
    const void* key = e.embedding ? static_cast<const void*>(e.embedding.get()) : e.audio.get();
    if (!key) throw Error(ErrorCode::ContractViolation, "write_shard: example carries no audio");
    if (!blobs.count(key)) {
      const auto offset = payload.size();
      if (e.embedding) {
        append_floats(payload, e.embedding->data().data(), e.embedding->data().size());
        blobs[key] = {{"kind", "embedding"}, {"offset", offset}, {"count", e.embedding->data().size()}};
      } else {
        std::vector<float> f(e.audio->samples.begin(), e.audio->samples.end());
        append_floats(payload, f.data(), f.size());
        blobs[key] = {{"kind", "audio"}, {"offset", offset}, {"count", f.size()}};
      }
    }
    j["blob"] = blobs[key];
    header["examples"].push_back(std::move(j));
  }
  const auto text = header.dump();
  std::vector<std::uint8_t> bytes(kShardMagic, kShardMagic + 4);
  put_le<std::uint32_t>(bytes, kShardVersion);
  put_le<std::uint64_t>(bytes, text.size());
  bytes.insert(bytes.end(), text.begin(), text.end());
  bytes.insert(bytes.end(), payload.begin(), payload.end());
  write_file_atomic(path, bytes);
}

std::vector<TrainingExample> read_shard(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  const std::string where = path.string();
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kShardMagic, 4) != 0) {
    throw Error(ErrorCode::DataError, where + ": not an A2S1 shard");
  }
  const auto version = get_le<std::uint32_t>(bytes, 4);
  if (version != kShardVersion) throw Error(ErrorCode::DataError, where + ": unsupported shard version " + std::to_string(version));
  const auto header_len = get_le<std::uint64_t>(bytes, 8);
  if (header_len > bytes.size() - 16) throw Error(ErrorCode::DataError, where + ": truncated header");
  const std::size_t payload_at = 16 + header_len;
  std::vector<TrainingExample> out;
  try {
    const auto header = json::parse(bytes.begin() + 16, bytes.begin() + static_cast<std::ptrdiff_t>(payload_at));
    std::map<std::size_t, std::shared_ptr<const TranscriberEmbedding>> embeddings;
    std::map<std::size_t, std::shared_ptr<const AudioSegment>> audio;
    for (const auto& j : header.at("examples")) {
      TrainingExample e;
      e.song_id = j.at("song_id");
      e.segment_index = j.at("segment_index");
      e.start_beat = j.at("start_beat");
      e.transposition = j.at("transposition");
      e.chords = chords_from_json(j.at("chords"));
      e.arrangement = score_from_json(j.at("arrangement"));
      e.melody = score_from_json(j.at("melody"));
      const auto& f = j.at("features");
      e.features.bass_onset = f.at("bass_onset").get<FeatureSeries>();
      e.features.melody_onset = f.at("melody_onset").get<FeatureSeries>();
      e.features.rhythmic_intensity = f.at("rhythmic_intensity").get<FeatureSeries>();
      const auto expect = extract_features(e.arrangement, e.melody);
      if (expect.bass_onset != e.features.bass_onset || expect.melody_onset != e.features.melody_onset ||
          expect.rhythmic_intensity != e.features.rhythmic_intensity) {
        throw Error(ErrorCode::DataError, where + ": stored features disagree with the arrangement");
      }
      const auto& blob = j.at("blob");
      const std::size_t offset = blob.at("offset");
      const std::size_t count = blob.at("count");
      if (payload_at + offset + count * sizeof(float) > bytes.size()) {
        throw Error(ErrorCode::DataError, where + ": payload out of range");
      }
      const auto* src = bytes.data() + payload_at + offset;
      if (blob.at("kind") == "embedding") {
        auto& emb = embeddings[offset];
        if (!emb) {
          auto fresh = std::make_shared<TranscriberEmbedding>();
          if (fresh->data().size() != count) throw Error(ErrorCode::DataError, where + ": embedding size mismatch");
          std::memcpy(fresh->data().data(), src, count * sizeof(float));
          emb = fresh;
        }
        e.embedding = emb;
      } else {
        auto& a = audio[offset];
        if (!a) {
          if (count != static_cast<std::size_t>(kSegmentSamples)) throw Error(ErrorCode::DataError, where + ": audio size mismatch");
          std::vector<float> f32(count);
          std::memcpy(f32.data(), src, count * sizeof(float));
          auto fresh = std::make_shared<AudioSegment>();
          fresh->samples.assign(f32.begin(), f32.end());
          a = fresh;
        }
        e.audio = a;
      }
      out.push_back(std::move(e));
    }
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::DataError, where + ": malformed shard header (" + ex.what() + ")");
  }
  return out;
}

PrepareSummary prepare_dataset(const std::vector<SongAsset>& songs, const fs::path& out_dir,
                               const TranscriberBackend* backend, double train_fraction, std::uint64_t seed) {
  fs::create_directories(out_dir);
  PrepareSummary summary;
  std::vector<TrainingExample> all;
  json shards = json::array();
  std::set<std::string> seen;
  for (const auto& song : songs) {
    if (!seen.insert(song.song_id).second) throw Error(ErrorCode::DataError, "duplicate song_id " + song.song_id);
    auto examples = segment_song(song, backend);
    const auto file = song.song_id + ".a2s";
    write_shard(out_dir / file, examples);
    shards.push_back({{"song_id", song.song_id}, {"file", file}, {"examples", examples.size()}});
    summary.examples += examples.size();
    for (auto& e : examples) {
      e.embedding.reset();
      e.audio.reset();
      all.push_back(std::move(e));
    }
    // Songs without a single full window still take part in the split.
    if (all.empty() || all.back().song_id != song.song_id) {
      TrainingExample marker;
      marker.song_id = song.song_id;
      all.push_back(std::move(marker));
    }
  }
  summary.songs = songs.size();
  const auto split = split_by_song(all, train_fraction, seed);
  summary.train_songs = split.train_songs;
  summary.test_songs = split.test_songs;
  json index = {{"version", kShardVersion},
                {"shards", shards},
                {"split", {{"seed", seed}, {"train_fraction", train_fraction}, {"train", split.train_songs}, {"test", split.test_songs}}}};
  write_text_atomic(out_dir / "index.json", index.dump(2) + "\n");
  return summary;
}

LoadedDataset load_prepared(const fs::path& dir) {
  const auto index_path = dir / "index.json";
  if (!fs::is_regular_file(index_path)) throw Error(ErrorCode::IoError, "no index.json in " + dir.string());
  json index;
  try {
    index = json::parse(read_text_file(index_path));
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::DataError, index_path.string() + ": " + ex.what());
  }
  LoadedDataset out;
  try {
    const auto train_ids = index.at("split").at("train").get<std::vector<std::string>>();
    const std::set<std::string> train(train_ids.begin(), train_ids.end());
    for (const auto& s : index.at("shards")) {
      auto examples = read_shard(dir / s.at("file").get<std::string>());
      auto& side = train.count(s.at("song_id").get<std::string>()) ? out.train : out.test;
      for (auto& e : examples) side.push_back(std::move(e));
    }
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::DataError, index_path.string() + ": " + ex.what());
  }
  return out;
}

}  // namespace a2s
