#include <cmath>

#include "a2s/error.hpp"
#include "a2s/eval.hpp"
#include "a2s/io_util.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace a2s;

namespace {

FeatureSeries series(std::initializer_list<int> on) {
  FeatureSeries s{};
  for (int t : on) s[t] = 1.0;
  return s;
}

ChordProgression held(const std::string& label) {
  ChordProgression p;
  p.frames.fill(parse_chord_label(label));
  return p;
}

double brute_pearson(const FeatureSeries& a, const FeatureSeries& b) {
  double n = 32, sa = 0, sb = 0, sab = 0, saa = 0, sbb = 0;
  for (int t = 0; t < 32; ++t) {
    sa += a[t];
    sb += b[t];
    sab += a[t] * b[t];
    saa += a[t] * a[t];
    sbb += b[t] * b[t];
  }
  return (n * sab - sa * sb) / std::sqrt((n * saa - sa * sa) * (n * sbb - sb * sb));
}

}  // namespace

TEST_CASE("onset f1 counts") {
  const auto r = onset_f1(series({0, 4, 8}), series({0, 8, 12, 16}));
  CHECK(r.precision == doctest::Approx(2.0 / 3.0));
  CHECK(r.recall == doctest::Approx(0.5));
  CHECK(r.f1 == doctest::Approx(4.0 / 7.0));
  CHECK(onset_f1(series({}), series({})).f1 == 1.0);
  CHECK(onset_f1(series({}), series({3})).f1 == 0.0);
  CHECK(onset_f1(series({3}), series({})).f1 == 0.0);
  // precision and recall swap with the arguments
  const auto s = onset_f1(series({0, 8, 12, 16}), series({0, 4, 8}));
  CHECK(s.precision == doctest::Approx(r.recall));
  CHECK(s.recall == doctest::Approx(r.precision));
}

TEST_CASE("pearson matches the textbook formula and is symmetric") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    FeatureSeries a{}, b{};
    for (int t = 0; t < 32; ++t) {
      a[t] = rng.uniform();
      b[t] = 0.5 * a[t] + rng.uniform();
    }
    CHECK(pearson(a, b) == doctest::Approx(brute_pearson(a, b)).epsilon(1e-9));
    CHECK(pearson(a, b) == pearson(b, a));
    CHECK(std::abs(pearson(a, b)) <= 1.0);
  }
  FeatureSeries flat{};
  flat.fill(0.25);
  CHECK(pearson(flat, flat) == 1.0);
  CHECK(pearson(flat, series({1, 2})) == 0.0);
  FeatureSeries up{}, down{};
  for (int t = 0; t < 32; ++t) up[t] = t, down[t] = -2.0 * t;
  CHECK(pearson(up, down) == doctest::Approx(-1.0));
}

TEST_CASE("chroma similarity") {
  const auto c_major = held("C:maj");
  const auto triad = SegmentScore::from_notes({{0, 48, 32}, {0, 64, 32}, {0, 67, 32}});
  CHECK(chroma_similarity(triad, c_major) == doctest::Approx(1.0));
  CHECK(chroma_similarity(SegmentScore{}, c_major) == 0.0);
  // one bar of C then silence: half the beats score 1, half 0
  const auto half = SegmentScore::from_notes({{0, 60, 16}, {0, 64, 16}, {0, 67, 16}});
  CHECK(chroma_similarity(half, c_major) == doctest::Approx(0.5));
  const auto n_chord = held("N");
  CHECK(chroma_similarity(triad, n_chord) == 0.0);
  const auto h = pitch_class_histogram(half);
  CHECK(h[0] == 16.0);
  CHECK(h[4] == 16.0);
  CHECK(h[1] == 0.0);
}

TEST_CASE("top voice onsets mark every onset step") {
  const auto s = SegmentScore::from_notes({{0, 60, 2}, {0, 72, 2}, {5, 40, 1}});
  CHECK(top_voice_onsets(s) == series({0, 5}));
}

TEST_CASE("self comparison is perfect and empty output scores zero") {
  Rng rng(2);
  std::vector<SegmentScore> ref;
  std::vector<ChordProgression> chords;
  for (int i = 0; i < 4; ++i) {
    ref.push_back(a2s::test::random_score(rng, 24, 30, 80));
    chords.push_back(a2s::test::random_chords(rng));
  }
  const std::vector<int> starts{0, 8, 16, 24};
  const auto self = evaluate(ref, ref, {}, chords, starts);
  for (const auto& m : self.segments) {
    CHECK(m.bass_onset.f1 == 1.0);
    CHECK(m.melody_onset.f1 == 1.0);
    CHECK(m.intensity_correlation == doctest::Approx(1.0));
    CHECK(m.chroma_similarity >= -1.0);
    CHECK(m.chroma_similarity <= 1.0);
  }
  CHECK(self.mean.start_beat == -1);

  const std::vector<SegmentScore> empty(4);
  const auto none = evaluate(empty, ref, {}, chords, starts);
  for (const auto& m : none.segments) CHECK(m.melody_onset.f1 == 0.0);

  std::vector<SegmentScore> noise;
  for (int i = 0; i < 4; ++i) noise.push_back(a2s::test::random_score(rng, 24, 30, 80));
  const auto rand = evaluate(noise, ref, {}, chords, starts);
  CHECK(rand.mean.bass_onset.f1 < self.mean.bass_onset.f1);
  CHECK(rand.mean.intensity_correlation < self.mean.intensity_correlation);

  double mean = 0;
  for (const auto& m : rand.segments) mean += m.chroma_similarity;
  CHECK(rand.mean.chroma_similarity == doctest::Approx(mean / 4));
}

TEST_CASE("a reference melody replaces the top voice") {
  const auto acc = SegmentScore::from_notes({{0, 48, 4}, {4, 50, 4}});
  const auto mel = SegmentScore::from_notes({{0, 72, 4}, {2, 74, 2}});
  const auto chords = held("C:maj");
  const auto r = evaluate({acc}, {acc}, {mel}, {chords}, {0});
  CHECK(r.segments[0].melody_onset.precision == doctest::Approx(0.5));
  CHECK(r.segments[0].melody_onset.recall == doctest::Approx(0.5));
}

TEST_CASE("segment counts must agree") {
  const std::vector<SegmentScore> one(1), two(2);
  const std::vector<ChordProgression> c1(1);
  try {
    evaluate(one, two, {}, c1, {0});
    FAIL("mismatch accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::LengthMismatch);
  }
  CHECK_THROWS_AS(evaluate(one, one, two, c1, {0}), Error);
}

TEST_CASE("csv report and plots") {
  a2s::test::TempDir dir;
  const auto s = SegmentScore::from_notes({{0, 40, 4}});
  const auto chords = held("E:min");
  const auto csv = evaluate({s, s}, {s, s}, {}, {chords, chords}, {0, 8}).to_csv();
  int lines = 0;
  for (char c : csv) lines += c == '\n';
  CHECK(lines == 5);
  CHECK(csv.find("\nmean,-1,") != std::string::npos);

  const auto svg = svg_line_plot("t", {{"a", {0, 1, 2}, {1, 0.5, NAN}}}, "step");
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("polyline") != std::string::npos);

  write_text_atomic(dir / "m.csv", "step,loss\n0,2.0\n1,1.5\n");
  write_loss_plot(dir / "m.csv", dir / "m.svg");
  CHECK(read_text_file(dir / "m.svg").find("loss") != std::string::npos);
  write_text_atomic(dir / "e.csv", "");
  CHECK_THROWS_AS(write_loss_plot(dir / "e.csv", dir / "e.svg"), Error);
}
