#include <algorithm>

#include "a2s/corruption.hpp"
#include "a2s/error.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace a2s;
using a2s::test::random_score;

namespace {

bool subset_of(const SegmentScore& part, const SegmentScore& whole) {
  return std::all_of(part.notes().begin(), part.notes().end(), [&](const NoteEvent& n) {
    return std::find(whole.notes().begin(), whole.notes().end(), n) != whole.notes().end();
  });
}

const SegmentScore kTriad = SegmentScore::from_notes({{0, 60, 4}, {0, 64, 4}, {0, 67, 4}});

}  // namespace

TEST_CASE("lead voice masking") {
  CHECK(mask_lead_voice(kTriad) == SegmentScore::from_notes({{0, 60, 4}, {0, 64, 4}}));
  CHECK(mask_lead_voice(SegmentScore{}).empty());
  const auto mono = SegmentScore::from_notes({{0, 72, 2}, {2, 70, 2}, {4, 60, 4}, {8, 79, 1}});
  CHECK(mask_lead_voice(mono).empty());
  // the top note is chosen per onset step, not per sounding chord
  const auto staggered = SegmentScore::from_notes({{0, 48, 8}, {2, 40, 2}, {2, 55, 2}});
  CHECK(mask_lead_voice(staggered) == SegmentScore::from_notes({{2, 40, 2}}));
}

TEST_CASE("mask probability is non-increasing in pitch") {
  CorruptionSpec spec;
  for (double p_base : {0.5, 0.65, 0.8, 0.0, 1.0}) {
    for (int p = 0; p < 127; ++p) CHECK(mask_probability(p, p_base, spec) >= mask_probability(p + 1, p_base, spec));
    for (int p = 0; p < 128; ++p) {
      CHECK(mask_probability(p, p_base, spec) >= 0.05);
      CHECK(mask_probability(p, p_base, spec) <= 0.95);
    }
  }
  CHECK(mask_probability(60, 0.6, spec) == doctest::Approx(0.6));
  CHECK(mask_probability(40, 0.6, spec) == doctest::Approx(0.7));
  CHECK(mask_probability(127, 0.5, spec) == doctest::Approx(0.5 - 0.005 * 67));
}

TEST_CASE("random mask determinism") {
  CorruptionSpec spec;
  Rng data(1);
  const auto s = random_score(data, 40);
  Rng a(99), b(99);
  const auto x = random_pitch_weighted_mask(s, spec, a);
  const auto y = random_pitch_weighted_mask(s, spec, b);
  CHECK(x == y);
  CHECK(subset_of(x, s));
}

TEST_CASE("degenerate range at 1.0 masks everything once the clamp allows it") {
  CorruptionSpec spec;
  spec.p_base_lo = spec.p_base_hi = 1.0;
  spec.pitch_slope = 0.0;
  spec.clamp_hi = 1.0;
  Rng rng(2), data(3);
  for (int i = 0; i < 20; ++i) CHECK(random_pitch_weighted_mask(random_score(data, 30), spec, rng).empty());
}

TEST_CASE("mask rate at a fixed base matches the binomial expectation") {
  CorruptionSpec spec;
  spec.p_base_lo = spec.p_base_hi = 0.65;
  Rng rng(4);
  int masked = 0, total = 0;
  // 10 000 notes at pitch 60, 32 per segment (one per step)
  for (int seg = 0; total < 10000; ++seg) {
    std::vector<NoteEvent> notes;
    for (int t = 0; t < 32 && total + static_cast<int>(notes.size()) < 10000; ++t) notes.push_back({t, 60, 1});
    const auto s = SegmentScore::from_notes(notes);
    masked += static_cast<int>(s.size() - random_pitch_weighted_mask(s, spec, rng).size());
    total += static_cast<int>(s.size());
  }
  CHECK(total == 10000);
  CHECK(std::abs(masked / 10000.0 - 0.65) <= 0.02);
}

TEST_CASE("aggregate mask rate over a pitch spread") {
  CorruptionSpec spec;
  Rng rng(5), data(6);
  long masked = 0, total = 0;
  while (total < 20000) {
    const auto s = random_score(data, 30, 36, 84);
    masked += static_cast<long>(s.size() - random_pitch_weighted_mask(s, spec, rng).size());
    total += static_cast<long>(s.size());
  }
  const double rate = static_cast<double>(masked) / total;
  CHECK(rate >= 0.45);
  CHECK(rate <= 0.85);
}

TEST_CASE("ramp option follows progress") {
  CorruptionSpec spec;
  spec.ramp = true;
  spec.pitch_slope = 0.0;
  Rng data(7);
  std::vector<NoteEvent> notes;
  for (int t = 0; t < 32; ++t) notes.push_back({t, 60, 1});
  const auto s = SegmentScore::from_notes(notes);
  for (double progress : {0.0, 1.0}) {
    spec.progress = progress;
    Rng rng(8);
    long masked = 0;
    for (int i = 0; i < 500; ++i) masked += static_cast<long>(32 - random_pitch_weighted_mask(s, spec, rng).size());
    CHECK(masked / 16000.0 == doctest::Approx(0.5 + 0.3 * progress).epsilon(0.05));
  }
}

TEST_CASE("stage dispatch") {
  CorruptionSpec spec;
  Rng rng(9);
  spec.stage = Stage::Warmup;
  CHECK(corrupt_for_stage(kTriad, spec, rng) == SegmentScore::from_notes({{0, 60, 4}, {0, 64, 4}}));

  spec.stage = Stage::FinetunePrior;
  Rng data(10);
  for (int i = 0; i < 10; ++i) CHECK(corrupt_for_stage(random_score(data, 20), spec, rng).empty());

  spec.stage = Stage::FinetuneAutoregressive;
  const auto prev = random_score(data, 12);
  CHECK(corrupt_for_stage(kTriad, spec, rng, prev) == prev);
  try {
    corrupt_for_stage(kTriad, spec, rng);
    FAIL("missing context accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingContext);
  }
}

TEST_CASE("pretrain composes lead-voice and random masking") {
  CorruptionSpec spec;
  spec.stage = Stage::Pretrain;
  Rng data(11);
  for (int i = 0; i < 30; ++i) {
    const auto s = random_score(data, 25);
    Rng a(1000 + i), b(1000 + i);
    const auto composed = random_pitch_weighted_mask(mask_lead_voice(s), spec, b);
    const auto out = corrupt_for_stage(s, spec, a);
    CHECK(out == composed);
    CHECK(subset_of(out, mask_lead_voice(s)));
  }
}

TEST_CASE("spec validation") {
  CorruptionSpec ok;
  CHECK_NOTHROW(ok.validate());
  CorruptionSpec bad_clamp;
  bad_clamp.clamp_lo = 0.9;
  bad_clamp.clamp_hi = 0.5;
  CHECK_THROWS_AS(bad_clamp.validate(), Error);
  CorruptionSpec bad_range;
  bad_range.p_base_hi = 1.2;
  CHECK_THROWS_AS(bad_range.validate(), Error);
  for (auto s : {Stage::Warmup, Stage::Pretrain, Stage::FinetunePrior, Stage::FinetuneAutoregressive}) {
    CHECK(parse_stage(to_string(s)) == s);
  }
}
