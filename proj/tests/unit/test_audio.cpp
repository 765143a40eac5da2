#include <cmath>
#include <numbers>

#include "a2s/audio_frontend.hpp"
#include "a2s/error.hpp"
#include "a2s/io_util.hpp"
#include "a2s/tensor_file.hpp"
#include "a2s/wav.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace a2s;

namespace {

Waveform tone(double hz, double seconds, int rate, double amp = 0.5, double start = 0.0) {
  Waveform w;
  w.sample_rate = rate;
  w.samples.assign(static_cast<std::size_t>(seconds * rate), 0.0);
  for (std::size_t i = static_cast<std::size_t>(start * rate); i < w.samples.size(); ++i) {
    w.samples[i] = amp * std::sin(2.0 * std::numbers::pi * hz * i / rate);
  }
  return w;
}

BeatGrid grid(double bpm, int beats, double offset = 0.0) {
  BeatGrid g;
  for (int i = 0; i < beats; ++i) {
    g.beat_times.push_back(offset + i * 60.0 / bpm);
    g.downbeat.push_back(i % 4 == 0);
  }
  return g;
}

AudioSegment segment_of(const std::vector<double>& samples) {
  AudioSegment s;
  s.samples = samples;
  s.samples.resize(kSegmentSamples, 0.0);
  return s;
}

}  // namespace

TEST_CASE("segment constants follow from the nominal tempo") {
  CHECK(kSegmentSamples == static_cast<int>(std::lround(8 * 60.0 / 95.0 * 16000)));
  CHECK(kEmbedFrames == (kSegmentSamples + kStftHop - 1) / kStftHop);
}

TEST_CASE("wav round trip and stereo averaging") {
  a2s::test::TempDir dir;
  auto w = tone(220, 0.1, 22050);
  write_wav(dir / "a.wav", w);
  const auto r = read_wav(dir / "a.wav");
  CHECK(r.sample_rate == 22050);
  REQUIRE(r.samples.size() == w.samples.size());
  for (std::size_t i = 0; i < w.samples.size(); ++i) CHECK(std::abs(r.samples[i] - w.samples[i]) < 1.0 / 16384);

  // hand-built stereo 16-bit file: left 0.5, right -0.25 => mean 0.125
  std::vector<std::uint8_t> b;
  auto u32 = [&](std::uint32_t v) { for (int k = 0; k < 4; ++k) b.push_back((v >> (8 * k)) & 255); };
  auto u16 = [&](std::uint16_t v) { b.push_back(v & 255); b.push_back(v >> 8); };
  b.insert(b.end(), {'R', 'I', 'F', 'F'});
  u32(36 + 8);
  b.insert(b.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  u32(16);
  u16(1);
  u16(2);
  u32(8000);
  u32(8000 * 4);
  u16(4);
  u16(16);
  b.insert(b.end(), {'d', 'a', 't', 'a'});
  u32(8);
  for (int i = 0; i < 2; ++i) {
    u16(16384);
    u16(static_cast<std::uint16_t>(-8192));
  }
  write_file_atomic(dir / "s.wav", b);
  const auto s = read_wav(dir / "s.wav");
  CHECK(s.sample_rate == 8000);
  REQUIRE(s.samples.size() == 2u);
  CHECK(s.samples[0] == doctest::Approx(0.125));
}

TEST_CASE("resampling keeps a tone's frequency") {
  const auto w = resample(tone(440, 0.5, 44100), 16000);
  CHECK(w.sample_rate == 16000);
  CHECK(w.samples.size() == 8000u);
  // zero crossings in the middle 0.25 s: 440 Hz gives about 220
  int crossings = 0;
  for (std::size_t i = 2001; i < 6000; ++i) crossings += (w.samples[i - 1] < 0) != (w.samples[i] < 0);
  CHECK(std::abs(crossings - 220) <= 2);
}

TEST_CASE("tensor container round trip") {
  a2s::test::TempDir dir;
  TensorFile f;
  f.meta = {{"k", 3}};
  Mat m(2, 3);
  m << 1, 2, 3, 4, 5, std::nextafter(6.0, 7.0);
  f.tensors.push_back({"w", m});
  save_tensor_file(dir / "t.bin", "TESTMAG1", f);
  const auto g = load_tensor_file(dir / "t.bin", "TESTMAG1");
  CHECK(g.meta["k"] == 3);
  REQUIRE(g.find("w"));
  CHECK(*g.find("w") == m);
  CHECK(g.find("x") == nullptr);
  CHECK_THROWS_AS(load_tensor_file(dir / "t.bin", "OTHERMAG"), Error);
}

TEST_CASE("beat grid parsing and validation") {
  const auto g = BeatGrid::parse("0.5\t1\n1.0\t0\n# note\n1.5\t0\n");
  CHECK(g.size() == 3u);
  CHECK(g.downbeat[0]);
  CHECK(g.with_extrapolated_end().beat_times.back() == doctest::Approx(2.0));
  CHECK_THROWS_AS(BeatGrid::parse("1.0\t1\n0.5\t0\n"), Error);
  CHECK_THROWS_AS(BeatGrid::parse("1.0\t2\n"), Error);
  CHECK(BeatGrid::parse(g.serialize()).beat_times == g.beat_times);
}

TEST_CASE("stretch output length is fixed") {
  const auto w = tone(440, 5.0, 22050);
  const auto s = stretch_and_resample(w, grid(120, 9), 0);
  CHECK(s.samples.size() == static_cast<std::size_t>(kSegmentSamples));
  CHECK(kSegmentSamples == 80842);
}

TEST_CASE("identity stretch returns the input window") {
  Rng rng(1);
  Waveform w;
  w.samples.resize(100000);
  for (auto& v : w.samples) v = rng.uniform(-1, 1);
  const auto g = grid(95, 13, 0.5);
  const auto s = stretch_and_resample(w, g, 0);
  const long base = 8000;
  for (long n = 0; n < kSegmentSamples; n += 97) CHECK(s.samples[n] == w.samples[base + n]);
}

TEST_CASE("silence stays silent") {
  Waveform w;
  w.sample_rate = 44100;
  w.samples.assign(44100 * 6, 0.0);
  const auto s = stretch_and_resample(w, grid(110, 13), 4);
  for (double v : s.samples) CHECK(v == 0.0);
}

TEST_CASE("stretch error cases") {
  const auto w = tone(440, 5.0, 16000);
  try {
    stretch_and_resample(w, grid(120, 8), 0);
    FAIL("short grid accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientBeats);
  }
  try {
    stretch_and_resample(w, grid(120, 12), 1);
    FAIL("off-downbeat start accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonDownbeatStart);
  }
}

TEST_CASE("stretching maps beats onto the nominal grid") {
  // a click on every beat at 120 BPM should land on every 60/95 s after stretching
  Waveform w;
  w.sample_rate = 16000;
  w.samples.assign(16000 * 6, 0.0);
  const auto g = grid(120, 10, 0.25);
  for (double t : g.beat_times) {
    const auto c = static_cast<std::size_t>(t * 16000);
    for (int i = 0; i < 200; ++i) w.samples[c + i] = std::sin(2 * std::numbers::pi * 1000 * i / 16000.0) * (1 - i / 200.0);
  }
  const auto s = stretch_and_resample(w, g, 0);
  // energy centroid around each expected beat; the vocoder window (1024) bounds the smear
  for (int beat = 1; beat < 8; ++beat) {
    const long expected = std::lround(beat * 60.0 / 95.0 * 16000);
    double mass = 0, moment = 0;
    for (long n = expected - 2500; n < expected + 2500; ++n) {
      const double e = s.samples[n] * s.samples[n];
      mass += e;
      moment += e * (n - expected);
    }
    REQUIRE(mass > 0);
    CHECK(std::abs(moment / mass) < 512);
  }
}

TEST_CASE("stub transcriber on silence and a 440 Hz tone") {
  StubTranscriber stub;
  const auto silent = transcribe_embed(segment_of({}), stub);
  for (float v : silent.data()) CHECK(v < 0.05f);

  const auto t = tone(440, kSegmentSamples / 16000.0 + 0.01, 16000);
  const auto e = transcribe_embed(segment_of(t.samples), stub);
  for (int frame : {20, 80, 140}) {
    int best = 0;
    for (int k = 1; k < kPianoKeys; ++k) {
      if (e.at(TranscriberEmbedding::kFrame, frame, k) > e.at(TranscriberEmbedding::kFrame, frame, best)) best = k;
    }
    CHECK(best == 69 - 21);
  }
  for (float v : e.data()) CHECK((v >= 0.0f && v <= 1.0f));
  CHECK(e.data().size() == static_cast<std::size_t>(3 * 158 * 88));
  CHECK(transcribe_embed(segment_of(t.samples), stub) == e);
}

TEST_CASE("stub onset mass sits at the start of a steady tone") {
  StubTranscriber stub;
  const auto t = tone(440, kSegmentSamples / 16000.0 + 0.01, 16000, 0.5, 1.0);
  const auto e = transcribe_embed(segment_of(t.samples), stub);
  const int start_frame = 16000 / kStftHop;  // about 31
  double near = 0, far = 0;
  for (int f = 0; f < kEmbedFrames; ++f) {
    const double v = e.at(TranscriberEmbedding::kOnset, f, 48);
    (std::abs(f - start_frame) <= 3 ? near : far) += v;
  }
  CHECK(near > 0.5);
  CHECK(far < 0.05 * near);
}

TEST_CASE("stub frame levels never grow when the waveform is scaled down") {
  StubTranscriber stub;
  Rng rng(6);
  std::vector<double> x(kSegmentSamples);
  for (auto& v : x) v = 0.3 * rng.uniform(-1, 1) + 0.3 * std::sin(0.05 * (&v - x.data()));
  const auto full = transcribe_embed(segment_of(x), stub);
  for (double alpha : {1.0, 0.7, 0.1}) {
    std::vector<double> y(x);
    for (auto& v : y) v *= alpha;
    const auto scaled = transcribe_embed(segment_of(y), stub);
    bool ok = true;
    for (int f = 0; f < kEmbedFrames; ++f) {
      for (int k = 0; k < kPianoKeys; ++k) {
        ok = ok && scaled.at(TranscriberEmbedding::kFrame, f, k) <= full.at(TranscriberEmbedding::kFrame, f, k);
      }
    }
    CHECK(ok);
  }
}

TEST_CASE("pretrained backend") {
  a2s::test::TempDir dir;
  try {
    make_transcriber("pretrained", dir / "missing.bin");
    FAIL("missing weights accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BackendUnavailable);
  }
  write_file_atomic(dir / "junk.bin", std::vector<std::uint8_t>{1, 2, 3});
  CHECK_THROWS_AS(make_transcriber("pretrained", dir / "junk.bin"), Error);

  write_identity_transcriber_weights(dir / "w.bin");
  const auto backend = make_transcriber("pretrained", dir / "w.bin");
  const auto t = tone(440, kSegmentSamples / 16000.0 + 0.01, 16000);
  const auto e = transcribe_embed(segment_of(t.samples), *backend);
  for (float v : e.data()) CHECK((v >= 0.0f && v <= 1.0f));
  int best = 0;
  for (int k = 1; k < kPianoKeys; ++k) {
    if (e.at(TranscriberEmbedding::kFrame, 80, k) > e.at(TranscriberEmbedding::kFrame, 80, best)) best = k;
  }
  CHECK(best == 48);
  CHECK(backend->id().rfind("pretrained:", 0) == 0);
  CHECK_THROWS_AS(make_transcriber("cloud"), Error);
}
