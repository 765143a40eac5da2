#include "a2s/error.hpp"
#include "a2s/midi.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace a2s;

namespace {

void put(std::vector<std::uint8_t>& out, std::initializer_list<int> bytes) {
  for (int b : bytes) out.push_back(static_cast<std::uint8_t>(b));
}

void track(std::vector<std::uint8_t>& out, const std::vector<std::uint8_t>& body) {
  put(out, {'M', 'T', 'r', 'k'});
  const auto n = body.size();
  put(out, {int(n >> 24) & 255, int(n >> 16) & 255, int(n >> 8) & 255, int(n) & 255});
  out.insert(out.end(), body.begin(), body.end());
}

}  // namespace

TEST_CASE("encoded files carry tempo 95, velocity 80 and one track") {
  const std::vector<GridNote> notes{{0, 60, 4}, {4, 64, 2}, {4, 67, 2}};
  const auto bytes = encode_midi(notes, 8);
  CHECK(bytes[9] == 0);   // type 0
  CHECK(bytes[11] == 1);  // one track
  const std::uint32_t tempo = 60'000'000 / 95 + 1;  // 631579 after rounding
  bool found_tempo = false;
  for (std::size_t i = 0; i + 5 < bytes.size(); ++i) {
    if (bytes[i] == 0xff && bytes[i + 1] == 0x51 && bytes[i + 2] == 3) {
      found_tempo = ((bytes[i + 3] << 16) | (bytes[i + 4] << 8) | bytes[i + 5]) == static_cast<int>(tempo);
    }
  }
  CHECK(found_tempo);
  const auto m = parse_midi(bytes);
  REQUIRE(m.notes.size() == 3u);
  for (const auto& n : m.notes) CHECK(n.velocity == 80);
  CHECK(m.length_beats() == doctest::Approx(8.0));
  CHECK(m.notes[0].end_tick == 480);
}

TEST_CASE("grid notes round-trip through a file") {
  a2s::test::TempDir dir;
  Rng rng(4);
  std::vector<GridNote> notes;
  SegmentScore a = a2s::test::random_score(rng, 20), b = a2s::test::random_score(rng, 20);
  append_segment(notes, a, 0);
  append_segment(notes, b, 8);
  write_midi(dir / "x.mid", notes, 16);
  const auto m = read_midi(dir / "x.mid");
  CHECK(m.segment(0) == a);
  CHECK(m.segment(8) == b);
}

TEST_CASE("type 1 files with running status and note-on velocity 0") {
  std::vector<std::uint8_t> f;
  put(f, {'M', 'T', 'h', 'd', 0, 0, 0, 6, 0, 1, 0, 2, 0, 96});
  std::vector<std::uint8_t> t1;
  put(t1, {0, 0xff, 0x51, 3, 0x07, 0xa1, 0x20, 0, 0xff, 0x2f, 0});
  std::vector<std::uint8_t> t2;
  // note-on 60, running-status note-on 64, then velocity-0 offs after one beat
  put(t2, {0, 0x90, 60, 100, 0, 64, 90, 96, 60, 0, 0, 64, 0, 48, 0x80, 67, 0, 0, 0xff, 0x2f, 0});
  track(f, t1);
  track(f, t2);
  const auto m = parse_midi(f);
  CHECK(m.ticks_per_quarter == 96);
  REQUIRE(m.notes.size() == 2u);
  CHECK(m.notes[0].pitch == 60);
  CHECK(m.notes[0].end_tick == 96);
  CHECK(m.notes[1].velocity == 90);
  CHECK(m.end_tick == 144);
  const auto s = m.segment(0);
  CHECK(s.notes()[0] == NoteEvent{0, 60, 4});
}

TEST_CASE("segment quantizes to quarter beats and clips at the end") {
  MidiFile m;
  m.ticks_per_quarter = 480;
  m.notes = {{110, 600, 60, 80, 0}, {3700, 5000, 62, 80, 0}, {3840, 4000, 64, 80, 0}};
  const auto s = m.segment(0);
  REQUIRE(s.size() == 2u);
  CHECK(s.notes()[0] == NoteEvent{1, 60, 4});
  CHECK(s.notes()[1] == NoteEvent{31, 62, 1});
  CHECK(m.segment(8).notes()[0] == NoteEvent{0, 64, 1});
}

TEST_CASE("malformed files are data errors") {
  std::vector<std::uint8_t> junk{'R', 'I', 'F', 'F', 0, 0, 0, 0};
  CHECK_THROWS_AS(parse_midi(junk), Error);
  auto bytes = encode_midi({{0, 60, 4}}, 4);
  bytes.resize(bytes.size() - 6);
  try {
    parse_midi(bytes);
    FAIL("accepted a truncated file");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DataError);
  }
}
