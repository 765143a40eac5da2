#include <numeric>

#include "a2s/chords.hpp"
#include "a2s/error.hpp"
#include "doctest.h"

using namespace a2s;

namespace {

std::vector<int> chroma_set(const ChordFrame& f) {
  std::vector<int> pcs;
  for (int k = 0; k < 12; ++k) {
    if (f.chroma[k]) pcs.push_back(k);
  }
  return pcs;
}

int sum(const std::array<std::uint8_t, 12>& v) { return std::accumulate(v.begin(), v.end(), 0); }

}  // namespace

TEST_CASE("common labels") {
  const auto c = parse_chord_label("C:maj");
  CHECK(c.root_class() == 0);
  CHECK(c.bass_class() == 0);
  CHECK(chroma_set(c) == std::vector<int>{0, 4, 7});

  CHECK(chroma_set(parse_chord_label("A:min7")) == std::vector<int>{0, 4, 7, 9});
  CHECK(parse_chord_label("A:min7").root_class() == 9);
  CHECK(chroma_set(parse_chord_label("G:7")) == std::vector<int>{2, 5, 7, 11});
  CHECK(chroma_set(parse_chord_label("Bb:maj7")) == std::vector<int>{2, 5, 9, 10});
  CHECK(parse_chord_label("Db").root_class() == 1);
  CHECK(parse_chord_label("C#:min") == parse_chord_label("Db:min"));
}

TEST_CASE("slash chords set the bass") {
  const auto g = parse_chord_label("G:maj/5");
  CHECK(g.root_class() == 7);
  CHECK(g.bass_class() == 2);
  const auto c = parse_chord_label("C:maj/b7");
  CHECK(c.bass_class() == 10);
  CHECK(c.chroma[10] == 1);
}

TEST_CASE("extensions add and remove degrees") {
  CHECK(chroma_set(parse_chord_label("C:maj(9)")) == std::vector<int>{0, 2, 4, 7});
  CHECK(chroma_set(parse_chord_label("C:maj(*5)")) == std::vector<int>{0, 4});
  CHECK(chroma_set(parse_chord_label("C:(1,b3)")) == std::vector<int>{0, 3});
}

TEST_CASE("no-chord frame") {
  for (const char* label : {"N", "X"}) {
    const auto f = parse_chord_label(label);
    CHECK(f.is_no_chord());
    CHECK(sum(f.chroma) == 0);
    CHECK(f.root[0] == 1);
    CHECK(f.bass[0] == 1);
    CHECK(f == no_chord_frame());
  }
}

TEST_CASE("frame invariants over the shorthand table") {
  const char* roots[] = {"C", "D", "E", "F", "G", "A", "B", "F#", "Ab"};
  const char* kinds[] = {"maj", "min", "dim", "aug", "maj7", "min7", "7", "dim7", "hdim7", "minmaj7", "maj6",
                         "min6", "9", "maj9", "min9", "11", "13", "sus2", "sus4", "5", "1"};
  for (auto r : roots) {
    for (auto k : kinds) {
      const auto f = parse_chord_label(std::string(r) + ":" + k);
      CHECK(sum(f.root) == 1);
      CHECK(sum(f.bass) == 1);
      CHECK(sum(f.chroma) >= 1);
      CHECK(f.chroma[f.root_class()] == 1);
      const auto v = f.to_vector();
      CHECK(v.size() == 36u);
      CHECK(v[f.root_class()] == 1.0);
      CHECK(v[24 + f.bass_class()] == 1.0);
    }
  }
}

TEST_CASE("bad labels are data errors") {
  for (const char* bad : {"H:maj", "C:foo", "C:maj(", "C:maj(x)", ""}) {
    try {
      parse_chord_label(bad);
      FAIL("accepted " << bad);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::DataError);
    }
  }
}

TEST_CASE("annotation file") {
  const auto a = ChordAnnotation::parse("# comment\n0\t4\tC:maj\n4\t8\tA:min\n\n8\t10\tN\n");
  CHECK(a.spans().size() == 3u);
  const auto p = a.progression_at(2);
  CHECK(p.frames[0] == parse_chord_label("C:maj"));
  CHECK(p.frames[1] == parse_chord_label("C:maj"));
  CHECK(p.frames[2] == parse_chord_label("A:min"));
  CHECK(p.frames[7] == no_chord_frame());
  CHECK(ChordAnnotation::parse(a.serialize()).spans().size() == 3u);

  try {
    a.progression_at(4);
    FAIL("expected a gap");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::AnnotationGap);
  }
  CHECK_THROWS_AS(ChordAnnotation::parse("0\tC:maj\n"), Error);
  CHECK_THROWS_AS(ChordAnnotation::parse("4\t2\tC:maj\n"), Error);
}
