#pragma once

// ELBO assembly, KL annealing schedules and the three-stage curriculum driver.

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "a2s/checkpoint.hpp"
#include "a2s/config.hpp"
#include "a2s/corruption.hpp"
#include "a2s/dataset.hpp"
#include "a2s/model.hpp"

namespace a2s {

// Closed-form KL(N(mean, exp(logvar)) || N(0, I)).
double kl_normal(std::span<const double> mean, std::span<const double> logvar);

struct CurriculumConfig {
  // Cumulative step at which each stage ends: warmup [0, e0), pretrain [e0, e1), finetune [e1, e2).
  std::array<long, 3> stage_end{};
  FinetuneMode finetune_mode = FinetuneMode::Prior;
  double beta_small = 0.01;
  double beta_sym_max = 0.5;

  static CurriculumConfig from(const TrainConfig& cfg, long steps_per_epoch);
  void validate() const;
  Stage stage_at(long step) const;
  long total_steps() const { return stage_end[2]; }
};

struct Betas {
  double chd = 0.0, aud = 0.0, sym = 0.0;
};

// Ramps are closed on the right so the stage-end values are hit exactly.
Betas beta_schedule(long step, const CurriculumConfig& cfg);

double learning_rate(long step, const CurriculumConfig& cfg, const TrainConfig& train);

struct LossBreakdown {
  double recon_arrangement = 0, recon_chord = 0, recon_features = 0;
  double kl_chd = 0, kl_aud = 0, kl_sym = 0;
  double beta_chd = 0, beta_aud = 0, beta_sym = 0;
  double total = 0;
  bool has_kl_chd = true, has_kl_aud = true, has_kl_sym = true, has_chord = true;
};

struct LossWeights {
  double arrangement = 1.0, chord = 1.0, features = 1.0;
};

// Everything the loss reads from a forward pass. Undefined Vars mark absent
// terms (e.g. the symbolic posterior in prior-mode fine-tuning).
struct ForwardOutputs {
  DecoderOutput decoder;
  std::optional<ChordLogits> chord;
  FeaturePrediction features;
  std::optional<Posterior> chd, aud, sym;
};

struct LossTargets {
  std::vector<ChordProgression> chords;
  FeatureBatch features;
};

struct Loss {
  ad::Var total;
  LossBreakdown breakdown;
};

Loss elbo_loss(const LossTargets& targets, const ForwardOutputs& out, const Betas& betas, const LossWeights& weights);

// The symbolic inputs and reparameterization noise for one batch.
struct BatchInputs {
  std::vector<const TrainingExample*> examples;
  std::vector<SegmentScore> symbolic;  // corrupted per stage; unused in prior fine-tuning
  Stage stage = Stage::Warmup;
  Mat noise_chd, noise_aud, noise_sym;  // B x d each
};

BatchInputs make_noise(BatchInputs in, Rng& rng);

// Full forward pass for a training batch; honors the model variant.
ForwardOutputs forward_batch(const Model& model, const BatchInputs& batch);
LossTargets targets_for(const BatchInputs& batch);

struct ReconstructionMetrics {
  double note_f1 = 0.0;          // (onset, pitch, duration) triples
  double chord_accuracy = 0.0;   // frames with root, bass and chroma all right
  double bass_onset_f1 = 0.0;    // predicted features vs ground truth
  std::size_t notes = 0;
  std::size_t frames = 0;
};

// Teacher-forced notes: the argmax count per step, then argmax pitch and
// argmax duration (given the teacher pitch) for each slot the teacher also
// filled. Slots beyond the teacher's count have no logits and are left out.
std::vector<SegmentScore> teacher_forced_notes(const DecoderOutput& out);

// Posterior means throughout; symbolic input corrupted for `stage` with `seed`.
ReconstructionMetrics reconstruction_metrics(const Model& model, const std::vector<TrainingExample>& examples,
                                             const CorruptionSpec& spec, std::uint64_t seed, int batch_size = 16);

// Precision/recall F1 over exact note matches; 1 when both are empty.
double note_f1(const SegmentScore& predicted, const SegmentScore& reference);

class Adam {
 public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) : b1_(beta1), b2_(beta2), eps_(eps) {}
  // Clips the global gradient norm to `clip` and applies one update. Returns
  // the pre-clip norm. Parameters without gradient are left untouched.
  double step(nn::ParamStore& params, double lr, double clip);
  AdamState& state() { return state_; }
  const AdamState& state() const { return state_; }

 private:
  double b1_, b2_, eps_;
  AdamState state_;
};

struct StepRecord {
  long step = 0;
  long epoch = 0;
  Stage stage = Stage::Warmup;
  double lr = 0;
  double grad_norm = 0;
  LossBreakdown loss;
};

std::string metrics_header();
std::string metrics_row(const StepRecord& r);

struct TrainSummary {
  long steps = 0;
  long epochs = 0;
  std::vector<StepRecord> history;  // every step
  std::vector<std::filesystem::path> checkpoints;
};

class Trainer {
 public:
  // `examples` must carry embeddings; augmentation is the caller's job.
  Trainer(TrainConfig cfg, std::vector<TrainingExample> examples);

  Model& model() { return *model_; }
  const CurriculumConfig& curriculum() const { return curriculum_; }
  long steps_per_epoch() const { return steps_per_epoch_; }
  const TrainingPosition& position() const { return position_; }

  // ResumeMismatch when the checkpoint was written under another
  // architecture, curriculum or seed.
  void resume(const std::filesystem::path& checkpoint);

  // Corrupted symbolic input and noise for the batch at `step`, independent of history.
  BatchInputs batch_at(long step) const;

  // One optimizer step at the current position.
  StepRecord train_step();

  // Runs until `stop_step` (default: end of the curriculum), writing metrics
  // and checkpoints into `out_dir` when non-empty.
  TrainSummary run(const std::filesystem::path& out_dir, std::optional<long> stop_step = std::nullopt,
                   const std::function<void(const StepRecord&)>& on_step = {});

  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::size_t> epoch_order(long epoch) const;

  TrainConfig cfg_;
  std::vector<TrainingExample> examples_;
  std::map<std::tuple<std::string, int, int>, std::size_t> by_position_;  // (song, transposition, segment)
  std::unique_ptr<Model> model_;
  Adam adam_;
  CurriculumConfig curriculum_;
  long steps_per_epoch_ = 1;
  TrainingPosition position_;
};

}  // namespace a2s
