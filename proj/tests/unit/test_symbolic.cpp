#include <algorithm>

#include "a2s/chords.hpp"
#include "a2s/error.hpp"
#include "a2s/symbolic.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace a2s;
using a2s::test::random_score;

namespace {

// Brute-force piano-roll oracle: walk every cell.
PianoRoll roll_oracle(const SegmentScore& s) {
  PianoRoll r;
  for (int t = 0; t < kSegmentSteps; ++t) {
    for (int p = 0; p < kPitchCount; ++p) {
      for (const auto& n : s.notes()) {
        if (n.pitch != p) continue;
        if (n.onset_step == t) r.onset[t][p] = 1;
        if (t >= n.onset_step && t < n.onset_step + n.duration_steps) r.sustain[t][p] = 1;
      }
    }
  }
  return r;
}

}  // namespace

TEST_CASE("from_notes canonicalizes") {
  auto s = SegmentScore::from_notes({{4, 60, 2}, {0, 64, 40}, {4, 60, 6}, {0, 50, 1}, {2, 200, 1}, {33, 60, 1}});
  REQUIRE(s.size() == 3);
  CHECK(s.notes()[0] == NoteEvent{0, 50, 1});
  CHECK(s.notes()[1] == NoteEvent{0, 64, 32});  // clipped at the segment end
  CHECK(s.notes()[2] == NoteEvent{4, 60, 6});   // duplicate merged, longer kept
}

TEST_CASE("from_notes cuts a note short when its pitch is struck again") {
  auto s = SegmentScore::from_notes({{0, 60, 8}, {4, 60, 2}});
  REQUIRE(s.size() == 2);
  CHECK(s.notes()[0].duration_steps == 4);
}

TEST_CASE("score invariants hold for random scores") {
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    auto s = random_score(rng, 30);
    CHECK(std::is_sorted(s.notes().begin(), s.notes().end()));
    for (std::size_t k = 0; k < s.size(); ++k) {
      const auto& n = s.notes()[k];
      CHECK(n.onset_step + n.duration_steps <= kSegmentSteps);
      CHECK(n.duration_steps >= 1);
      if (k > 0) {
        const auto& m = s.notes()[k - 1];
        CHECK_FALSE((m.onset_step == n.onset_step && m.pitch == n.pitch));
      }
    }
  }
}

TEST_CASE("piano roll of the empty score is all zero") {
  const auto r = score_to_pianoroll(SegmentScore{});
  CHECK(r == PianoRoll{});
  CHECK(pianoroll_to_score(PianoRoll{}).empty());
}

TEST_CASE("single note piano roll") {
  const auto s = SegmentScore::from_notes({{0, 60, 4}});
  const auto r = score_to_pianoroll(s);
  int onsets = 0, sustains = 0;
  for (int t = 0; t < kSegmentSteps; ++t) {
    for (int p = 0; p < kPitchCount; ++p) {
      onsets += r.onset[t][p];
      sustains += r.sustain[t][p];
    }
  }
  CHECK(onsets == 1);
  CHECK(r.onset[0][60] == 1);
  CHECK(sustains == 4);
  for (int t = 0; t < 4; ++t) CHECK(r.sustain[t][60] == 1);
  CHECK(pianoroll_to_score(r) == s);
}

TEST_CASE("piano roll matches the cell oracle and round-trips") {
  Rng rng(2024);
  for (int i = 0; i < 100; ++i) {
    const auto s = random_score(rng, 20);
    const auto r = score_to_pianoroll(s);
    CHECK(r == roll_oracle(s));
    for (int t = 0; t < kSegmentSteps; ++t) {
      for (int p = 0; p < kPitchCount; ++p) {
        if (r.onset[t][p]) CHECK(r.sustain[t][p] == 1);
        if (r.sustain[t][p] && !r.onset[t][p]) CHECK((t > 0 && r.sustain[t - 1][p] == 1));
      }
    }
    CHECK(pianoroll_to_score(r) == s);
  }
}

TEST_CASE("malformed rolls are rejected") {
  PianoRoll orphan;
  orphan.sustain[3][60] = 1;
  try {
    pianoroll_to_score(orphan);
    FAIL("expected MalformedRoll");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MalformedRoll);
  }
  PianoRoll bare;
  bare.onset[0][60] = 1;
  CHECK_THROWS_AS(pianoroll_to_score(bare), Error);
}

TEST_CASE("transpose examples") {
  const auto s = SegmentScore::from_notes({{0, 60, 4}});
  CHECK(transpose(s, 12).notes()[0].pitch == 72);
  Rng rng(3);
  const auto r = random_score(rng, 15);
  CHECK(transpose(r, 0) == r);
}

TEST_CASE("transpose drops notes leaving the MIDI range") {
  for (int p = 117; p <= 127; ++p) {
    const auto s = SegmentScore::from_notes({{0, p, 2}, {1, 60, 2}});
    const auto t = transpose(s, 5);
    const bool kept = p + 5 <= 127;
    CHECK(t.size() == (kept ? 2u : 1u));
    CHECK(std::any_of(t.notes().begin(), t.notes().end(), [](const NoteEvent& n) { return n.pitch == 65; }));
  }
  const auto low = SegmentScore::from_notes({{0, 3, 1}});
  CHECK(transpose(low, -4).empty());
}

TEST_CASE("transpose is invertible when nothing drops") {
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const auto s = random_score(rng, 20, 30, 90);
    for (int k = -11; k <= 11; ++k) CHECK(transpose(transpose(s, k), -k) == s);
  }
}

TEST_CASE("transpose_chord rotates every sub-vector") {
  const auto c = parse_chord_label("C:maj");
  ChordProgression p;
  p.frames.fill(c);
  const auto d = transpose_chord(p, 2);
  CHECK(d.frames[0].root_class() == 2);
  for (int k = 0; k < 12; ++k) {
    CHECK(d.frames[0].chroma[(k + 2) % 12] == c.chroma[k]);
    CHECK(d.frames[0].bass[(k + 2) % 12] == c.bass[k]);
  }
  CHECK(transpose_chord(p, 0) == p);
  CHECK(transpose_chord(p, 12) == p);
  CHECK(transpose_chord(p, -3) == transpose_chord(p, 9));
}

TEST_CASE("bass onset boundary at 48") {
  CHECK(extract_bass_onset(SegmentScore::from_notes({{4, 47, 1}}))[4] == 1.0);
  CHECK(extract_bass_onset(SegmentScore::from_notes({{4, 48, 1}}))[4] == 0.0);
  const auto empty = extract_bass_onset(SegmentScore{});
  CHECK(std::all_of(empty.begin(), empty.end(), [](double v) { return v == 0.0; }));
}

TEST_CASE("bass onset ignores added notes at or above 48") {
  Rng rng(8);
  for (int i = 0; i < 50; ++i) {
    const auto base = random_score(rng, 10, 21, 60);
    auto notes = base.notes();
    const auto extra = random_score(rng, 10, 48, 108);
    notes.insert(notes.end(), extra.notes().begin(), extra.notes().end());
    CHECK(extract_bass_onset(SegmentScore::from_notes(notes)) == extract_bass_onset(base));
  }
}

TEST_CASE("melody onset") {
  const auto m = extract_melody_onset(SegmentScore::from_notes({{0, 72, 4}, {4, 74, 4}, {8, 76, 4}}));
  for (int t = 0; t < kSegmentSteps; ++t) CHECK(m[t] == ((t == 0 || t == 4 || t == 8) ? 1.0 : 0.0));
  Rng rng(9);
  for (int i = 0; i < 50; ++i) {
    const auto s = random_score(rng, 12);
    const auto roll = roll_oracle(s);
    const auto series = extract_melody_onset(s);
    for (int t = 0; t < kSegmentSteps; ++t) {
      const bool any = std::any_of(roll.onset[t].begin(), roll.onset[t].end(), [](auto v) { return v != 0; });
      CHECK(series[t] == (any ? 1.0 : 0.0));
    }
  }
}

TEST_CASE("rhythmic intensity examples") {
  std::vector<NoteEvent> three{{0, 60, 1}, {0, 64, 1}, {0, 67, 1}};
  CHECK(extract_rhythmic_intensity(SegmentScore::from_notes(three))[0] == doctest::Approx(0.375));
  CHECK(extract_rhythmic_intensity(SegmentScore{})[5] == 0.0);
  std::vector<NoteEvent> ten;
  for (int k = 0; k < 10; ++k) ten.push_back({3, 50 + k, 1});
  CHECK(extract_rhythmic_intensity(SegmentScore::from_notes(ten))[3] == 1.0);
}

TEST_CASE("rhythmic intensity matches a brute-force counter and survives transposition") {
  Rng rng(10);
  for (int i = 0; i < 100; ++i) {
    const auto s = random_score(rng, 40, 40, 80);
    const auto series = extract_rhythmic_intensity(s);
    for (int t = 0; t < kSegmentSteps; ++t) {
      int count = 0;
      for (const auto& n : s.notes()) count += n.onset_step == t;
      CHECK(series[t] == std::min(count, 8) / 8.0);
    }
    CHECK(extract_rhythmic_intensity(transpose(s, 7)) == series);
  }
}

TEST_CASE("feature series stay in the unit interval") {
  Rng rng(12);
  for (int i = 0; i < 100; ++i) {
    const auto f = extract_features(random_score(rng, 60), random_score(rng, 8, 60, 90));
    for (const auto* series : {&f.bass_onset, &f.melody_onset, &f.rhythmic_intensity}) {
      CHECK(series->size() == 32u);
      for (double v : *series) CHECK((v >= 0.0 && v <= 1.0));
    }
  }
}
