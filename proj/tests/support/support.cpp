#include "support.hpp"

#include <cmath>
#include <cstdlib>
#include <map>
#include <sys/wait.h>
#include <unistd.h>

#include "a2s/fixture.hpp"

namespace fs = std::filesystem;

namespace a2s::test {

TempDir::TempDir(const std::string& tag) {
  static int counter = 0;
  const auto base = fs::temp_directory_path();
  for (;;) {
    path_ = base / (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    if (fs::create_directories(path_)) break;
  }
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

SegmentScore random_score(Rng& rng, int n, int lo, int hi) {
  std::vector<NoteEvent> notes;
  for (int i = 0; i < n; ++i) {
    NoteEvent e;
    e.onset_step = static_cast<int>(rng.below(kSegmentSteps));
    e.pitch = lo + static_cast<int>(rng.below(hi - lo + 1));
    e.duration_steps = 1 + static_cast<int>(rng.below(kSegmentSteps - e.onset_step));
    notes.push_back(e);
  }
  return SegmentScore::from_notes(std::move(notes));
}

ChordProgression random_chords(Rng& rng) {
  static const char* const kQualities[] = {"maj", "min", "7", "min7", "maj7", "dim", "sus4"};
  static const char* const kRoots[] = {"C", "C#", "D", "Eb", "E", "F", "F#", "G", "Ab", "A", "Bb", "B"};
  ChordProgression p;
  for (int b = 0; b < kBeatsPerSegment; b += 2) {
    const std::string label = std::string(kRoots[rng.below(12)]) + ":" + kQualities[rng.below(7)];
    p.frames[b] = p.frames[b + 1] = parse_chord_label(label);
  }
  return p;
}

TranscriberEmbedding random_embedding(Rng& rng) {
  TranscriberEmbedding e;
  for (auto& v : e.data()) v = static_cast<float>(rng.uniform());
  return e;
}

ModelConfig tiny_model(std::uint64_t seed) {
  ModelConfig m;
  m.chord_hidden = 8;
  m.conv_channels = 2;
  m.encoder_hidden = 8;
  m.time_hidden = 8;
  m.note_hidden = 8;
  m.note_embed = 4;
  m.feature_hidden = 8;
  m.max_notes = 4;
  m.init_seed = seed;
  return m;
}

std::vector<TrainingExample> synthetic_examples(int n, std::uint64_t seed, const std::string& song) {
  Rng rng(seed);
  std::vector<TrainingExample> out;
  for (int i = 0; i < n; ++i) {
    TrainingExample ex;
    ex.song_id = song;
    ex.segment_index = i;
    ex.start_beat = 8 * i;
    ex.embedding = std::make_shared<TranscriberEmbedding>(random_embedding(rng));
    ex.chords = random_chords(rng);
    ex.arrangement = random_score(rng, 10, 36, 80);
    ex.melody = random_score(rng, 4, 72, 84);
    ex.features = extract_features(ex.arrangement, ex.melody);
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<TrainingExample> fixture_examples(const fs::path& dir, int songs, int segments, std::uint64_t seed) {
  FixtureOptions opt;
  opt.songs = songs;
  opt.segments_per_song = segments;
  opt.seed = seed;
  const auto manifest = write_fixture(dir, opt);
  StubTranscriber stub;
  std::vector<TrainingExample> out;
  for (const auto& asset : load_manifest(manifest)) {
    auto part = segment_song(asset, &stub);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

TrainConfig tiny_train_config(long s1, long s2, long s3, int batch) {
  TrainConfig c;
  c.batch_size = batch;
  c.stage_steps = std::array<long, 3>{s1, s2, s3};
  c.model = tiny_model();
  c.augment = false;
  c.log_every = 1;
  return c;
}

GradCheckResult gradient_check(nn::ParamStore& params, const std::function<ad::Var()>& loss, int count,
                               std::uint64_t seed, double eps, double min_grad) {
  params.zero_grad();
  ad::backward(loss());
  std::vector<std::pair<std::string, Eigen::Index>> candidates;
  for (const auto& name : params.names()) {
    const auto& g = params.get(name).grad();
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      if (std::abs(g.data()[i]) > min_grad) candidates.emplace_back(name, i);
    }
  }
  std::map<std::string, Mat> grads;
  for (const auto& name : params.names()) grads[name] = params.get(name).grad();

  GradCheckResult result;
  Rng rng(seed);
  for (int k = 0; k < count && !candidates.empty(); ++k) {
    const auto [name, i] = candidates[rng.below(candidates.size())];
    auto& value = params.get(name).mutable_value().data()[i];
    const double saved = value;
    value = saved + eps;
    const double up = loss().scalar();
    value = saved - eps;
    const double down = loss().scalar();
    value = saved;
    const double numeric = (up - down) / (2 * eps);
    const double analytic = grads[name].data()[i];
    const double rel = std::abs(analytic - numeric) / std::max(std::abs(analytic), std::abs(numeric));
    if (rel > result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst.push_back(name + "[" + std::to_string(i) + "]: " + std::to_string(analytic) + " vs " +
                             std::to_string(numeric));
    }
    ++result.checked;
  }
  return result;
}

int run_command(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  if (status == -1) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : 128;
}

}  // namespace a2s::test
