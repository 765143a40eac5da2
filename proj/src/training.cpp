#include "a2s/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "a2s/error.hpp"

namespace a2s {

namespace fs = std::filesystem;

double kl_normal(std::span<const double> mean, std::span<const double> logvar) {
  if (mean.size() != logvar.size()) throw Error(ErrorCode::ShapeError, "kl_normal: mean/logvar size differ");
  double kl = 0.0;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    kl += mean[i] * mean[i] + std::exp(logvar[i]) - 1.0 - logvar[i];
  }
  return 0.5 * kl;
}

CurriculumConfig CurriculumConfig::from(const TrainConfig& cfg, long steps_per_epoch) {
  CurriculumConfig c;
  const auto lengths = cfg.stage_steps ? *cfg.stage_steps
                                       : std::array<long, 3>{cfg.stage_epochs[0] * steps_per_epoch,
                                                             cfg.stage_epochs[1] * steps_per_epoch,
                                                             cfg.stage_epochs[2] * steps_per_epoch};
  c.stage_end = {lengths[0], lengths[0] + lengths[1], lengths[0] + lengths[1] + lengths[2]};
  c.finetune_mode = cfg.finetune_mode;
  c.validate();
  return c;
}

void CurriculumConfig::validate() const {
  if (!(0 < stage_end[0] && stage_end[0] < stage_end[1] && stage_end[1] < stage_end[2])) {
    throw Error(ErrorCode::ContractViolation, "curriculum stage boundaries must be strictly increasing");
  }
  if (beta_small < 0.0 || beta_small > 0.5 || beta_sym_max < 0.0 || beta_sym_max > 0.5) {
    throw Error(ErrorCode::ContractViolation, "beta values must lie in [0, 0.5]");
  }
}

Stage CurriculumConfig::stage_at(long step) const {
  if (step < stage_end[0]) return Stage::Warmup;
  if (step < stage_end[1]) return Stage::Pretrain;
  return finetune_mode == FinetuneMode::Prior ? Stage::FinetunePrior : Stage::FinetuneAutoregressive;
}

Betas beta_schedule(long step, const CurriculumConfig& cfg) {
  const double s = static_cast<double>(std::max(0L, step));
  const double e0 = static_cast<double>(cfg.stage_end[0]);
  const double e1 = static_cast<double>(cfg.stage_end[1]);
  if (s <= e0) {
    const double b = cfg.beta_small * (s / e0);
    return {b, b, b};
  }
  if (s <= e1) {
    const double frac = (s - e0) / (e1 - e0);
    return {cfg.beta_small, cfg.beta_small, cfg.beta_small + (cfg.beta_sym_max - cfg.beta_small) * frac};
  }
  const double sym = cfg.finetune_mode == FinetuneMode::Prior ? 0.0 : cfg.beta_sym_max;
  return {cfg.beta_small, cfg.beta_small, sym};
}

double learning_rate(long step, const CurriculumConfig& cfg, const TrainConfig& train) {
  if (train.lr_schedule == "constant") return train.lr_start;
  const double frac = std::clamp(static_cast<double>(step) / static_cast<double>(cfg.stage_end[1]), 0.0, 1.0);
  return train.lr_start + (train.lr_end - train.lr_start) * frac;
}

Loss elbo_loss(const LossTargets& targets, const ForwardOutputs& out, const Betas& betas, const LossWeights& weights) {
  const int b = out.decoder.batch;
  if (b < 1) throw Error(ErrorCode::ShapeError, "elbo_loss: empty batch");
  if (targets.features.bass.rows() != b) throw Error(ErrorCode::ShapeError, "elbo_loss: feature targets batch size");
  const double inv_b = 1.0 / b;
  const auto& dec = out.decoder;

  std::vector<ad::Var> arr{ad::softmax_cross_entropy(dec.count_logits, dec.count_targets)};
  if (dec.slots > 0) {
    arr.push_back(ad::softmax_cross_entropy(dec.pitch_logits, dec.pitch_targets));
    arr.push_back(ad::softmax_cross_entropy(dec.duration_logits, dec.duration_targets));
  }
  const auto recon_arr = ad::scale(ad::add_scalars(arr), inv_b);

  const auto& fp = out.features;
  const std::vector<ad::Var> feat{ad::bce_with_logits(fp.bass_logits, targets.features.bass),
                                  ad::bce_with_logits(fp.melody_logits, targets.features.melody),
                                  ad::squared_error(fp.intensity, targets.features.intensity)};
  const auto recon_feat = ad::scale(ad::add_scalars(feat), inv_b);

  Loss loss;
  auto& bd = loss.breakdown;
  bd.beta_chd = betas.chd;
  bd.beta_aud = betas.aud;
  bd.beta_sym = betas.sym;
  bd.recon_arrangement = recon_arr.scalar();
  bd.recon_features = recon_feat.scalar();

  std::vector<ad::Var> terms{ad::scale(recon_arr, weights.arrangement), ad::scale(recon_feat, weights.features)};

  bd.has_chord = out.chord.has_value();
  if (out.chord) {
    if (static_cast<int>(targets.chords.size()) != b) throw Error(ErrorCode::ShapeError, "elbo_loss: chord targets batch size");
    std::vector<int> root(kBeatsPerSegment * b), bass(kBeatsPerSegment * b);
    Mat chroma(kBeatsPerSegment * b, 12);
    for (int f = 0; f < kBeatsPerSegment; ++f) {
      for (int i = 0; i < b; ++i) {
        const auto& frame = targets.chords[i].frames[f];
        root[f * b + i] = frame.root_class();
        bass[f * b + i] = frame.bass_class();
        for (int p = 0; p < 12; ++p) chroma(f * b + i, p) = frame.chroma[p];
      }
    }
    const std::vector<ad::Var> parts{ad::softmax_cross_entropy(out.chord->root, root),
                                     ad::softmax_cross_entropy(out.chord->bass, bass),
                                     ad::bce_with_logits(out.chord->chroma, chroma)};
    const auto recon_chord = ad::scale(ad::add_scalars(parts), inv_b);
    bd.recon_chord = recon_chord.scalar();
    terms.push_back(ad::scale(recon_chord, weights.chord));
  }

  auto add_kl = [&](const std::optional<Posterior>& post, double beta, double& value, bool& present) {
    present = post.has_value();
    if (!post) return;
    const auto kl = ad::scale(ad::kl_standard_normal(post->mean, post->logvar), inv_b);
    value = kl.scalar();
    if (beta != 0.0) terms.push_back(ad::scale(kl, beta));
  };
  add_kl(out.chd, betas.chd, bd.kl_chd, bd.has_kl_chd);
  add_kl(out.aud, betas.aud, bd.kl_aud, bd.has_kl_aud);
  add_kl(out.sym, betas.sym, bd.kl_sym, bd.has_kl_sym);

  loss.total = ad::add_scalars(terms);
  bd.total = loss.total.scalar();
  return loss;
}

BatchInputs make_noise(BatchInputs in, Rng& rng) {
  const auto b = static_cast<Eigen::Index>(in.examples.size());
  auto draw = [&](int d) {
    Mat m(b, d);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
  };
  in.noise_chd = draw(kZChord);
  in.noise_aud = draw(kZAudio);
  in.noise_sym = draw(kZSymbolic);
  return in;
}

LossTargets targets_for(const BatchInputs& batch) {
  LossTargets t;
  std::vector<SymbolicFeatures> feats;
  for (const auto* e : batch.examples) {
    t.chords.push_back(e->chords);
    feats.push_back(e->features);
  }
  t.features = make_feature_batch(feats);
  return t;
}

ForwardOutputs forward_batch(const Model& model, const BatchInputs& batch) {
  const auto b = static_cast<Eigen::Index>(batch.examples.size());
  if (b == 0) throw Error(ErrorCode::ShapeError, "forward_batch: empty batch");
  const Variant variant = model.config().variant;
  std::vector<ChordProgression> chords;
  std::vector<const TranscriberEmbedding*> embeddings;
  std::vector<SymbolicFeatures> feats;
  std::vector<SegmentScore> arrangements;
  for (const auto* e : batch.examples) {
    if (!e->embedding) throw Error(ErrorCode::DataError, e->song_id + ": example has no transcriber embedding");
    chords.push_back(e->chords);
    embeddings.push_back(e->embedding.get());
    feats.push_back(e->features);
    arrangements.push_back(e->arrangement);
  }

  ForwardOutputs out;
  ad::Var z_chd, z_aud, z_sym;
  const bool uses_chord = variant == Variant::Full || variant == Variant::ChordOnly;
  const bool uses_audio = variant != Variant::ChordOnly;
  const bool uses_sym = uses_chord;

  if (uses_chord) {
    out.chd = model.encode_chord(chords);
    z_chd = ad::reparameterize(out.chd->mean, out.chd->logvar, batch.noise_chd);
    out.chord = model.decode_chord(z_chd, chords);
  } else {
    z_chd = ad::zeros(b, kZChord);
  }

  if (uses_audio) {
    auto post = model.encode_audio(embeddings);
    if (variant == Variant::AudioOnlyAe) {
      z_aud = post.mean;
    } else {
      z_aud = ad::reparameterize(post.mean, post.logvar, batch.noise_aud);
      out.aud = std::move(post);
    }
  } else {
    z_aud = ad::zeros(b, kZAudio);
  }

  if (uses_sym && batch.stage != Stage::FinetunePrior) {
    if (static_cast<Eigen::Index>(batch.symbolic.size()) != b) {
      throw Error(ErrorCode::ShapeError, "forward_batch: symbolic inputs do not match the batch");
    }
    std::vector<PianoRoll> rolls;
    for (const auto& s : batch.symbolic) rolls.push_back(score_to_pianoroll(s));
    out.sym = model.encode_symbolic(rolls);
    z_sym = ad::reparameterize(out.sym->mean, out.sym->logvar, batch.noise_sym);
  } else if (uses_sym) {
    z_sym = ad::constant(batch.noise_sym);
  } else {
    z_sym = ad::zeros(b, kZSymbolic);
  }

  out.features = model.predict_features(z_aud);
  const std::vector<ad::Var> parts{z_chd, z_aud, z_sym};
  out.decoder = model.decode_arrangement(ad::concat_cols(parts), make_feature_batch(feats), arrangements);
  return out;
}

double note_f1(const SegmentScore& predicted, const SegmentScore& reference) {
  if (predicted.empty() && reference.empty()) return 1.0;
  std::size_t hit = 0;
  for (const auto& n : predicted.notes()) {
    if (std::binary_search(reference.notes().begin(), reference.notes().end(), n)) ++hit;
  }
  if (hit == 0) return 0.0;
  const double p = static_cast<double>(hit) / predicted.size();
  const double r = static_cast<double>(hit) / reference.size();
  return 2 * p * r / (p + r);
}

std::vector<SegmentScore> teacher_forced_notes(const DecoderOutput& out) {
  const int b = out.batch;
  const Eigen::Index rows = static_cast<Eigen::Index>(kSegmentSteps) * b;
  std::vector<std::vector<NoteEvent>> notes(b);
  for (int t = 0; t < kSegmentSteps; ++t) {
    for (int i = 0; i < b; ++i) {
      const Eigen::Index r = static_cast<Eigen::Index>(t) * b + i;
      Eigen::Index count;
      out.count_logits.value().row(r).maxCoeff(&count);
      const int n = std::min(static_cast<int>(count), out.count_targets[r]);
      for (int s = 0; s < n; ++s) {
        const Eigen::Index row = s * rows + r;
        Eigen::Index pitch, dur;
        out.pitch_logits.value().row(row).maxCoeff(&pitch);
        out.duration_logits.value().row(row).maxCoeff(&dur);
        notes[i].push_back({t, static_cast<int>(pitch), static_cast<int>(dur) + 1});
      }
    }
  }
  std::vector<SegmentScore> result;
  for (auto& n : notes) result.push_back(SegmentScore::from_notes(std::move(n)));
  return result;
}

ReconstructionMetrics reconstruction_metrics(const Model& model, const std::vector<TrainingExample>& examples,
                                             const CorruptionSpec& spec, std::uint64_t seed, int batch_size) {
  ReconstructionMetrics m;
  std::size_t hits = 0, predicted = 0, reference = 0, frames_ok = 0;
  std::size_t bass_hit = 0, bass_pred = 0, bass_ref = 0;
  for (std::size_t lo = 0; lo < examples.size(); lo += batch_size) {
    BatchInputs in;
    in.stage = spec.stage;
    const std::size_t hi = std::min(examples.size(), lo + batch_size);
    for (std::size_t k = lo; k < hi; ++k) {
      in.examples.push_back(&examples[k]);
      Rng rng = Rng::derive({seed, static_cast<std::uint64_t>(k)});
      std::optional<SegmentScore> previous;
      if (spec.stage == Stage::FinetuneAutoregressive) previous = SegmentScore{};
      in.symbolic.push_back(corrupt_for_stage(examples[k].arrangement, spec, rng, previous));
    }
    const auto b = static_cast<Eigen::Index>(in.examples.size());
    in.noise_chd = Mat::Zero(b, kZChord);
    in.noise_aud = Mat::Zero(b, kZAudio);
    in.noise_sym = Mat::Zero(b, kZSymbolic);
    const auto out = forward_batch(model, in);
    std::vector<SegmentScore> teacher;
    for (const auto* e : in.examples) teacher.push_back(e->arrangement);
    const auto pred = teacher_forced_notes(out.decoder);
    for (Eigen::Index i = 0; i < b; ++i) {
      const auto& ref = teacher[i];
      // Extra count slots have no pitch; they still count as predictions.
      std::size_t extra = 0;
      for (int t = 0; t < kSegmentSteps; ++t) {
        Eigen::Index count;
        out.decoder.count_logits.value().row(t * b + i).maxCoeff(&count);
        extra += static_cast<std::size_t>(std::max<Eigen::Index>(0, count - out.decoder.count_targets[t * b + i]));
      }
      for (const auto& n : pred[i].notes()) {
        if (std::binary_search(ref.notes().begin(), ref.notes().end(), n)) ++hits;
      }
      predicted += pred[i].size() + extra;
      reference += ref.size();
      const auto series = out.features.series(static_cast<int>(i));
      for (int t = 0; t < kSegmentSteps; ++t) {
        const bool p = series.bass_onset[t] > 0.5;
        const bool r = in.examples[i]->features.bass_onset[t] > 0.5;
        bass_hit += p && r;
        bass_pred += p;
        bass_ref += r;
      }
    }
    if (out.chord) {
      const auto chords = model.reconstruct_chords(*out.chord, static_cast<int>(b));
      for (Eigen::Index i = 0; i < b; ++i) {
        for (int f = 0; f < kBeatsPerSegment; ++f) {
          frames_ok += chords[i].frames[f] == in.examples[i]->chords.frames[f];
        }
      }
    }
    m.frames += static_cast<std::size_t>(b) * kBeatsPerSegment;
  }
  auto f1 = [](std::size_t hit, std::size_t pred, std::size_t ref) {
    if (pred == 0 && ref == 0) return 1.0;
    return pred + ref == 0 ? 0.0 : 2.0 * static_cast<double>(hit) / static_cast<double>(pred + ref);
  };
  m.notes = reference;
  m.note_f1 = f1(hits, predicted, reference);
  m.bass_onset_f1 = f1(bass_hit, bass_pred, bass_ref);
  m.chord_accuracy = m.frames ? static_cast<double>(frames_ok) / static_cast<double>(m.frames) : 0.0;
  return m;
}

double Adam::step(nn::ParamStore& params, double lr, double clip) {
  double sq = 0.0;
  for (const auto& name : params.names()) {
    const auto& g = params.get(name).grad();
    if (g.size()) sq += g.squaredNorm();
  }
  const double norm = std::sqrt(sq);
  const double scale = norm > clip ? clip / norm : 1.0;
  ++state_.t;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(state_.t));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(state_.t));
  for (const auto& name : params.names()) {
    auto& p = params.get(name);
    if (p.grad().size() == 0) continue;
    auto& m = state_.m[name];
    auto& v = state_.v[name];
    if (m.size() == 0) {
      m = Mat::Zero(p.rows(), p.cols());
      v = Mat::Zero(p.rows(), p.cols());
    }
    const Mat g = p.grad() * scale;
    m = b1_ * m + (1.0 - b1_) * g;
    v = b2_ * v + (1.0 - b2_) * g.cwiseProduct(g);
    p.mutable_value().array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  }
  return norm;
}

std::string metrics_header() {
  return "step,epoch,stage,lr,grad_norm,recon_arrangement,recon_chord,recon_features,kl_chd,kl_aud,kl_sym,"
         "beta_chd,beta_aud,beta_sym,total";
}

std::string metrics_row(const StepRecord& r) {
  std::ostringstream o;
  o.precision(10);
  const auto& l = r.loss;
  o << r.step << ',' << r.epoch << ',' << to_string(r.stage) << ',' << r.lr << ',' << r.grad_norm << ','
    << l.recon_arrangement << ',' << l.recon_chord << ',' << l.recon_features << ',' << l.kl_chd << ',' << l.kl_aud
    << ',' << l.kl_sym << ',' << l.beta_chd << ',' << l.beta_aud << ',' << l.beta_sym << ',' << l.total;
  return o.str();
}

Trainer::Trainer(TrainConfig cfg, std::vector<TrainingExample> examples)
    : cfg_(std::move(cfg)), examples_(std::move(examples)) {
  cfg_.validate();
  if (examples_.empty()) throw Error(ErrorCode::DataError, "no training examples");
  for (std::size_t i = 0; i < examples_.size(); ++i) {
    const auto& e = examples_[i];
    if (!e.embedding) throw Error(ErrorCode::DataError, e.song_id + ": training example lacks an embedding");
    by_position_[{e.song_id, e.transposition, e.segment_index}] = i;
  }
  steps_per_epoch_ = static_cast<long>((examples_.size() + cfg_.batch_size - 1) / cfg_.batch_size);
  curriculum_ = CurriculumConfig::from(cfg_, steps_per_epoch_);
  model_ = std::make_unique<Model>(cfg_.model);
}

void Trainer::resume(const fs::path& checkpoint) {
  const auto ckpt = load_checkpoint(checkpoint);
  if (!ckpt.model.same_architecture(cfg_.model)) {
    throw Error(ErrorCode::ResumeMismatch, "checkpoint architecture differs from the training config");
  }
  const auto theirs = CurriculumConfig::from(ckpt.train, steps_per_epoch_);
  if (theirs.stage_end != curriculum_.stage_end || theirs.finetune_mode != curriculum_.finetune_mode ||
      ckpt.train.seed != cfg_.seed || ckpt.train.batch_size != cfg_.batch_size) {
    throw Error(ErrorCode::ResumeMismatch, "checkpoint curriculum, seed or batch size differ from the training config");
  }
  if (ckpt.position.step > curriculum_.total_steps()) {
    throw Error(ErrorCode::ResumeMismatch, "checkpoint step lies beyond the configured curriculum");
  }
  restore_params(*model_, ckpt);
  adam_.state() = ckpt.adam;
  position_ = ckpt.position;
}

std::vector<std::size_t> Trainer::epoch_order(long epoch) const {
  std::vector<std::size_t> order(examples_.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng::derive({cfg_.seed, 0xE90C, static_cast<std::uint64_t>(epoch)});
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

BatchInputs Trainer::batch_at(long step) const {
  const long epoch = step / steps_per_epoch_;
  const long slot = step % steps_per_epoch_;
  const auto order = epoch_order(epoch);
  const std::size_t lo = static_cast<std::size_t>(slot) * cfg_.batch_size;
  const std::size_t hi = std::min(order.size(), lo + cfg_.batch_size);

  BatchInputs in;
  in.stage = curriculum_.stage_at(step);
  CorruptionSpec spec = cfg_.corruption;
  spec.stage = in.stage;
  spec.progress = static_cast<double>(step - curriculum_.stage_end[0]) /
                  static_cast<double>(curriculum_.stage_end[1] - curriculum_.stage_end[0]);
  for (std::size_t k = lo; k < hi; ++k) {
    const auto u = order[k];
    const auto& e = examples_[u];
    in.examples.push_back(&e);
    Rng rng = Rng::derive({cfg_.seed, spec.seed, static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(u)});
    std::optional<SegmentScore> previous;
    if (in.stage == Stage::FinetuneAutoregressive) {
      // The first segment of a song sees an empty context.
      auto it = by_position_.find({e.song_id, e.transposition, e.segment_index - 1});
      previous = it == by_position_.end() ? SegmentScore{} : examples_[it->second].arrangement;
    }
    in.symbolic.push_back(corrupt_for_stage(e.arrangement, spec, rng, previous));
  }
  Rng noise = Rng::derive({cfg_.seed, static_cast<std::uint64_t>(step), 0xA015E});
  return make_noise(std::move(in), noise);
}

StepRecord Trainer::train_step() {
  const long step = position_.step;
  const auto batch = batch_at(step);
  auto& params = model_->params();
  params.zero_grad();
  const auto out = forward_batch(*model_, batch);
  const auto betas = beta_schedule(step, curriculum_);
  const auto loss = elbo_loss(targets_for(batch), out, betas,
                              {cfg_.weight_arrangement, cfg_.weight_chord, cfg_.weight_features});
  if (!std::isfinite(loss.breakdown.total)) {
    throw Error(ErrorCode::ContractViolation, "non-finite loss at step " + std::to_string(step));
  }
  ad::backward(loss.total);

  StepRecord rec;
  rec.step = step;
  rec.epoch = step / steps_per_epoch_;
  rec.stage = batch.stage;
  rec.lr = learning_rate(step, curriculum_, cfg_);
  rec.loss = loss.breakdown;
  rec.grad_norm = adam_.step(params, rec.lr, cfg_.grad_clip);

  position_.step = step + 1;
  position_.epoch = position_.step / steps_per_epoch_;
  position_.stage = curriculum_.stage_at(position_.step);
  if (batch.stage == Stage::FinetunePrior || batch.stage == Stage::FinetuneAutoregressive) {
    position_.reached_finetune = true;
  }
  return rec;
}

void Trainer::save(const fs::path& path) const { save_checkpoint(path, *model_, cfg_, position_, adam_.state()); }

TrainSummary Trainer::run(const fs::path& out_dir, std::optional<long> stop_step,
                          const std::function<void(const StepRecord&)>& on_step) {
  const long stop = std::min(stop_step.value_or(curriculum_.total_steps()), curriculum_.total_steps());
  TrainSummary summary;
  std::ofstream metrics;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    const auto path = out_dir / "metrics.csv";
    const bool fresh = position_.step == 0 || !fs::exists(path);
    metrics.open(path, fresh ? std::ios::trunc : std::ios::app);
    if (!metrics) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    if (fresh) metrics << metrics_header() << '\n';
  }
  auto checkpoint = [&](const std::string& name) {
    if (out_dir.empty()) return;
    const auto path = out_dir / name;
    save(path);
    summary.checkpoints.push_back(path);
  };
  while (position_.step < stop) {
    const auto rec = train_step();
    summary.history.push_back(rec);
    if (on_step) on_step(rec);
    if (metrics.is_open() && (rec.step % cfg_.log_every == 0 || position_.step == stop)) {
      metrics << metrics_row(rec) << '\n';
      metrics.flush();
    }
    if (position_.step % steps_per_epoch_ == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%04ld.ckpt", position_.step / steps_per_epoch_);
      checkpoint(name);
    }
    for (int k = 0; k < 3; ++k) {
      if (position_.step == curriculum_.stage_end[k]) checkpoint("stage" + std::to_string(k + 1) + ".ckpt");
    }
  }
  checkpoint("latest.ckpt");
  summary.steps = position_.step;
  summary.epochs = position_.epoch;
  return summary;
}

}  // namespace a2s
