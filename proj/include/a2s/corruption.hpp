#pragma once

// Stage-dependent corruption of the target arrangement before it reaches the
// symbolic-texture encoder.

#include <optional>
#include <string>

#include "a2s/rng.hpp"
#include "a2s/symbolic.hpp"

namespace a2s {

enum class Stage { Warmup, Pretrain, FinetunePrior, FinetuneAutoregressive };

const char* to_string(Stage s);
Stage parse_stage(const std::string& s);

struct CorruptionSpec {
  Stage stage = Stage::Warmup;
  double p_base_lo = 0.5;
  double p_base_hi = 0.8;
  int pitch_pivot = 60;
  double pitch_slope = 0.005;
  double clamp_lo = 0.05;
  double clamp_hi = 0.95;
  std::uint64_t seed = 0;
  // When set, p_base follows lo -> hi linearly with `progress` in [0,1]
  // instead of being drawn per segment.
  bool ramp = false;
  double progress = 0.0;

  // Throws ContractViolation when the ranges are out of order or outside [0,1].
  void validate() const;
};

// Probability that a note at `pitch` is masked, given the per-segment base rate.
double mask_probability(int pitch, double p_base, const CorruptionSpec& spec);

// Removes the highest note among those starting on each step.
SegmentScore mask_lead_voice(const SegmentScore& score);

// Draws p_base once from [p_base_lo, p_base_hi], then masks every note
// independently with mask_probability().
SegmentScore random_pitch_weighted_mask(const SegmentScore& score, const CorruptionSpec& spec, Rng& rng);

// Warmup: lead voice only. Pretrain: lead voice then random mask.
// FinetunePrior: empty score. FinetuneAutoregressive: `previous` unchanged,
// MissingContext when absent.
SegmentScore corrupt_for_stage(const SegmentScore& score, const CorruptionSpec& spec, Rng& rng,
                               const std::optional<SegmentScore>& previous = std::nullopt);

}  // namespace a2s
