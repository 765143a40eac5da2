#include "a2s/corruption.hpp"

#include <algorithm>

#include "a2s/error.hpp"

namespace a2s {

const char* to_string(Stage s) {
  switch (s) {
    case Stage::Warmup: return "warmup";
    case Stage::Pretrain: return "pretrain";
    case Stage::FinetunePrior: return "finetune_prior";
    case Stage::FinetuneAutoregressive: return "finetune_autoregressive";
  }
  return "warmup";
}

Stage parse_stage(const std::string& s) {
  if (s == "warmup") return Stage::Warmup;
  if (s == "pretrain") return Stage::Pretrain;
  if (s == "finetune_prior") return Stage::FinetunePrior;
  if (s == "finetune_autoregressive") return Stage::FinetuneAutoregressive;
  throw Error(ErrorCode::UsageError, "unknown stage '" + s + "'");
}

void CorruptionSpec::validate() const {
  if (!(0.0 <= clamp_lo && clamp_lo < clamp_hi && clamp_hi <= 1.0)) {
    throw Error(ErrorCode::ContractViolation, "corruption clamp must satisfy 0 <= lo < hi <= 1");
  }
  if (!(0.0 <= p_base_lo && p_base_lo <= p_base_hi && p_base_hi <= 1.0)) {
    throw Error(ErrorCode::ContractViolation, "corruption p_base range must lie in [0,1]");
  }
}

double mask_probability(int pitch, double p_base, const CorruptionSpec& spec) {
  const double p = p_base + spec.pitch_slope * (spec.pitch_pivot - pitch);
  return std::clamp(p, spec.clamp_lo, spec.clamp_hi);
}

SegmentScore mask_lead_voice(const SegmentScore& score) {
  std::array<int, kSegmentSteps> top;
  top.fill(-1);
  for (const auto& n : score.notes()) top[n.onset_step] = std::max(top[n.onset_step], n.pitch);
  std::vector<NoteEvent> kept;
  for (const auto& n : score.notes()) {
    if (n.pitch != top[n.onset_step]) kept.push_back(n);
  }
  return SegmentScore::from_notes(std::move(kept));
}

SegmentScore random_pitch_weighted_mask(const SegmentScore& score, const CorruptionSpec& spec, Rng& rng) {
  double p_base = spec.p_base_lo;
  if (spec.ramp) {
    p_base += (spec.p_base_hi - spec.p_base_lo) * std::clamp(spec.progress, 0.0, 1.0);
  } else if (spec.p_base_hi > spec.p_base_lo) {
    p_base = rng.uniform(spec.p_base_lo, spec.p_base_hi);
  }
  std::vector<NoteEvent> kept;
  for (const auto& n : score.notes()) {
    if (!rng.bernoulli(mask_probability(n.pitch, p_base, spec))) kept.push_back(n);
  }
  return SegmentScore::from_notes(std::move(kept));
}

SegmentScore corrupt_for_stage(const SegmentScore& score, const CorruptionSpec& spec, Rng& rng,
                               const std::optional<SegmentScore>& previous) {
  switch (spec.stage) {
    case Stage::Warmup: return mask_lead_voice(score);
    case Stage::Pretrain: return random_pitch_weighted_mask(mask_lead_voice(score), spec, rng);
    case Stage::FinetunePrior: return SegmentScore{};
    case Stage::FinetuneAutoregressive:
      if (!previous) throw Error(ErrorCode::MissingContext, "autoregressive corruption needs the previous segment");
      return *previous;
  }
  return score;
}

}  // namespace a2s
