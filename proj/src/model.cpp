#include "a2s/model.hpp"

#include <algorithm>
#include <cmath>

#include "a2s/error.hpp"

namespace a2s {

namespace {

constexpr int kTimeInput = 3 + kPitchCount;  // features + previous-step onsets
constexpr int kPitchStart = kPitchCount;     // start token row in the pitch table
constexpr int kDurationStart = kMaxDuration; // start token row in the duration table

int ceil_div(int a, int b) { return (a + b - 1) / b; }

int pick(const Eigen::Ref<const Eigen::RowVectorXd>& logits, const DecodeOptions& opt, Rng& rng,
         int min_allowed = 0) {
  const int n = static_cast<int>(logits.size());
  if (min_allowed >= n) return -1;
  if (opt.greedy) {
    int best = min_allowed;
    for (int i = min_allowed + 1; i < n; ++i) {
      if (logits(i) > logits(best)) best = i;
    }
    return best;
  }
  const double temp = std::max(opt.temperature, 1e-6);
  double m = -INFINITY;
  for (int i = min_allowed; i < n; ++i) m = std::max(m, logits(i) / temp);
  std::vector<double> p(n, 0.0);
  double total = 0.0;
  for (int i = min_allowed; i < n; ++i) total += p[i] = std::exp(logits(i) / temp - m);
  double u = rng.uniform() * total;
  for (int i = min_allowed; i < n; ++i) {
    u -= p[i];
    if (u <= 0.0) return i;
  }
  return n - 1;
}

}  // namespace

const char* to_string(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::AudioOnlyVae: return "audio_only_vae";
    case Variant::AudioOnlyAe: return "audio_only_ae";
    case Variant::ChordOnly: return "chord_only";
  }
  return "full";
}

Variant parse_variant(const std::string& s) {
  if (s == "full") return Variant::Full;
  if (s == "audio_only_vae") return Variant::AudioOnlyVae;
  if (s == "audio_only_ae") return Variant::AudioOnlyAe;
  if (s == "chord_only") return Variant::ChordOnly;
  throw Error(ErrorCode::UsageError, "unknown model variant '" + s + "'");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"chord_hidden", chord_hidden},   {"conv_channels", conv_channels}, {"encoder_hidden", encoder_hidden},
          {"time_hidden", time_hidden},     {"note_hidden", note_hidden},     {"note_embed", note_embed},
          {"feature_hidden", feature_hidden}, {"max_notes", max_notes},       {"init_seed", init_seed},
          {"variant", to_string(variant)},  {"z_chd", kZChord},               {"z_aud", kZAudio},
          {"z_sym", kZSymbolic}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.chord_hidden = j.at("chord_hidden");
  c.conv_channels = j.at("conv_channels");
  c.encoder_hidden = j.at("encoder_hidden");
  c.time_hidden = j.at("time_hidden");
  c.note_hidden = j.at("note_hidden");
  c.note_embed = j.at("note_embed");
  c.feature_hidden = j.at("feature_hidden");
  c.max_notes = j.at("max_notes");
  c.init_seed = j.value("init_seed", std::uint64_t{0});
  c.variant = parse_variant(j.at("variant").get<std::string>());
  if (j.value("z_chd", kZChord) != kZChord || j.value("z_aud", kZAudio) != kZAudio ||
      j.value("z_sym", kZSymbolic) != kZSymbolic) {
    throw Error(ErrorCode::ConfigMismatch, "latent dimensions must be 128/192/192");
  }
  return c;
}

bool ModelConfig::same_architecture(const ModelConfig& o) const {
  return chord_hidden == o.chord_hidden && conv_channels == o.conv_channels && encoder_hidden == o.encoder_hidden &&
         time_hidden == o.time_hidden && note_hidden == o.note_hidden && note_embed == o.note_embed &&
         feature_hidden == o.feature_hidden && max_notes == o.max_notes && variant == o.variant;
}

SymbolicFeatures FeaturePrediction::series(int row) const {
  SymbolicFeatures f;
  for (int t = 0; t < kSegmentSteps; ++t) {
    f.bass_onset[t] = 1.0 / (1.0 + std::exp(-bass_logits.value()(row, t)));
    f.melody_onset[t] = 1.0 / (1.0 + std::exp(-melody_logits.value()(row, t)));
    f.rhythmic_intensity[t] = intensity.value()(row, t);
  }
  return f;
}

FeatureBatch make_feature_batch(const std::vector<SymbolicFeatures>& feats) {
  const auto b = static_cast<Eigen::Index>(feats.size());
  FeatureBatch out{Mat(b, kSegmentSteps), Mat(b, kSegmentSteps), Mat(b, kSegmentSteps)};
  for (Eigen::Index i = 0; i < b; ++i) {
    for (int t = 0; t < kSegmentSteps; ++t) {
      out.bass(i, t) = feats[i].bass_onset[t];
      out.melody(i, t) = feats[i].melody_onset[t];
      out.intensity(i, t) = feats[i].rhythmic_intensity[t];
    }
  }
  return out;
}

std::vector<std::vector<NoteEvent>> notes_by_step(const SegmentScore& score, int max_notes) {
  std::vector<std::vector<NoteEvent>> steps(kSegmentSteps);
  for (const auto& n : score.notes()) {
    if (static_cast<int>(steps[n.onset_step].size()) < max_notes) steps[n.onset_step].push_back(n);
  }
  return steps;
}

Mat embedding_patches(const std::vector<const TranscriberEmbedding*>& embeddings) {
  const int b = static_cast<int>(embeddings.size());
  const int tp = ceil_div(kEmbedFrames, kConvKernelTime);
  const int kp = ceil_div(kPianoKeys, kConvKernelKey);
  const int width = kEmbedChannels * kConvKernelTime * kConvKernelKey;
  Mat m = Mat::Zero(static_cast<Eigen::Index>(tp) * b * kp, width);
  for (int t = 0; t < tp; ++t) {
    for (int i = 0; i < b; ++i) {
      const auto& e = *embeddings[i];
      for (int k = 0; k < kp; ++k) {
        const Eigen::Index row = (static_cast<Eigen::Index>(t) * b + i) * kp + k;
        for (int c = 0; c < kEmbedChannels; ++c) {
          for (int dt = 0; dt < kConvKernelTime; ++dt) {
            const int frame = t * kConvKernelTime + dt;
            if (frame >= kEmbedFrames) continue;
            for (int dk = 0; dk < kConvKernelKey; ++dk) {
              const int key = k * kConvKernelKey + dk;
              if (key >= kPianoKeys) continue;
              m(row, (c * kConvKernelTime + dt) * kConvKernelKey + dk) = e.at(c, frame, key);
            }
          }
        }
      }
    }
  }
  return m;
}

Mat roll_patches(const std::vector<PianoRoll>& rolls) {
  const int b = static_cast<int>(rolls.size());
  const int tp = kSegmentSteps / kConvKernelTime;
  const int kp = ceil_div(kPitchCount, kConvKernelKey);
  const int width = 2 * kConvKernelTime * kConvKernelKey;
  Mat m = Mat::Zero(static_cast<Eigen::Index>(tp) * b * kp, width);
  for (int t = 0; t < tp; ++t) {
    for (int i = 0; i < b; ++i) {
      for (int k = 0; k < kp; ++k) {
        const Eigen::Index row = (static_cast<Eigen::Index>(t) * b + i) * kp + k;
        for (int dt = 0; dt < kConvKernelTime; ++dt) {
          const int step = t * kConvKernelTime + dt;
          for (int dk = 0; dk < kConvKernelKey; ++dk) {
            const int pitch = k * kConvKernelKey + dk;
            if (pitch >= kPitchCount) continue;
            m(row, (0 * kConvKernelTime + dt) * kConvKernelKey + dk) = rolls[i].onset[step][pitch];
            m(row, (1 * kConvKernelTime + dt) * kConvKernelKey + dk) = rolls[i].sustain[step][pitch];
          }
        }
      }
    }
  }
  return m;
}

Model::Model(const ModelConfig& config) : config_(config) {
  if (config.max_notes < 1) throw Error(ErrorCode::ContractViolation, "max_notes must be positive");
  Rng rng(config.init_seed);
  const int hc = config.chord_hidden;
  const int he = config.encoder_hidden;
  const int ht = config.time_hidden;
  const int hn = config.note_hidden;
  const int emb = config.note_embed;
  const int ch = config.conv_channels;

  chord_fwd_ = nn::Gru(params_, "chord_enc.gru_fwd", kChordFrameDim, hc, rng);
  chord_bwd_ = nn::Gru(params_, "chord_enc.gru_bwd", kChordFrameDim, hc, rng);
  chord_mean_ = nn::Linear(params_, "chord_enc.mean", 2 * hc, kZChord, rng);
  chord_logvar_ = nn::Linear(params_, "chord_enc.logvar", 2 * hc, kZChord, rng);
  chord_dec_init_ = nn::Linear(params_, "chord_dec.init", kZChord, hc, rng);
  chord_dec_ = nn::Gru(params_, "chord_dec.gru", kChordFrameDim + kZChord, hc, rng);
  chord_dec_out_ = nn::Linear(params_, "chord_dec.out", hc, kChordFrameDim, rng);

  const int audio_kp = ceil_div(kPianoKeys, kConvKernelKey);
  const int sym_kp = ceil_div(kPitchCount, kConvKernelKey);
  audio_conv_ = nn::Linear(params_, "audio_enc.conv", kEmbedChannels * kConvKernelTime * kConvKernelKey, ch, rng);
  audio_gru_ = nn::Gru(params_, "audio_enc.gru", audio_kp * ch, he, rng);
  audio_mean_ = nn::Linear(params_, "audio_enc.mean", he, kZAudio, rng);
  audio_logvar_ = nn::Linear(params_, "audio_enc.logvar", he, kZAudio, rng);
  sym_conv_ = nn::Linear(params_, "sym_enc.conv", 2 * kConvKernelTime * kConvKernelKey, ch, rng);
  sym_gru_ = nn::Gru(params_, "sym_enc.gru", sym_kp * ch, he, rng);
  sym_mean_ = nn::Linear(params_, "sym_enc.mean", he, kZSymbolic, rng);
  sym_logvar_ = nn::Linear(params_, "sym_enc.logvar", he, kZSymbolic, rng);

  feat_hidden_ = nn::Linear(params_, "feat_pred.hidden", kZAudio, config.feature_hidden, rng);
  feat_out_ = nn::Linear(params_, "feat_pred.out", config.feature_hidden, 3 * kSegmentSteps, rng);

  time_init_ = nn::Linear(params_, "arr_dec.time_init", kZTotal, ht, rng);
  time_z_ = nn::Linear(params_, "arr_dec.time_z", kZTotal, 3 * ht, rng);
  time_gru_ = nn::Gru(params_, "arr_dec.time_gru", kTimeInput, ht, rng);
  count_head_ = nn::Linear(params_, "arr_dec.count", ht, config.max_notes + 1, rng);
  note_init_ = nn::Linear(params_, "arr_dec.note_init", ht, hn, rng);
  pitch_embed_ = &params_.add("arr_dec.pitch_embed", nn::uniform_init(kPitchCount + 1, emb, 0.1, rng));
  duration_embed_ = &params_.add("arr_dec.duration_embed", nn::uniform_init(kMaxDuration + 1, emb, 0.1, rng));
  note_gru_ = nn::Gru(params_, "arr_dec.note_gru", emb, hn, rng);
  pitch_head_ = nn::Linear(params_, "arr_dec.pitch", hn, kPitchCount, rng);
  duration_head_ = nn::Linear(params_, "arr_dec.duration", hn + emb, kMaxDuration, rng);
}

Posterior Model::encode_chord(const std::vector<ChordProgression>& chords) const {
  const auto b = static_cast<Eigen::Index>(chords.size());
  Mat x(kBeatsPerSegment * b, kChordFrameDim);
  for (int f = 0; f < kBeatsPerSegment; ++f) {
    for (Eigen::Index i = 0; i < b; ++i) {
      const auto v = chords[i].frames[f].to_vector();
      for (int d = 0; d < kChordFrameDim; ++d) x(f * b + i, d) = v[d];
    }
  }
  const auto input = ad::constant(std::move(x));
  const auto gx_f = chord_fwd_.input_projection(input);
  const auto gx_b = chord_bwd_.input_projection(input);
  auto hf = ad::zeros(b, config_.chord_hidden);
  auto hb = ad::zeros(b, config_.chord_hidden);
  for (int f = 0; f < kBeatsPerSegment; ++f) {
    hf = chord_fwd_.step(ad::slice_rows(gx_f, f * b, b), hf);
    hb = chord_bwd_.step(ad::slice_rows(gx_b, (kBeatsPerSegment - 1 - f) * b, b), hb);
  }
  const std::vector<ad::Var> both{hf, hb};
  const auto h = ad::concat_cols(both);
  return {chord_mean_.forward(h), ad::soft_bound(chord_logvar_.forward(h), kLogVarBound)};
}

ChordLogits Model::decode_chord(const ad::Var& z_chd, const std::vector<ChordProgression>& teacher) const {
  const auto b = static_cast<Eigen::Index>(teacher.size());
  if (z_chd.rows() != b || z_chd.cols() != kZChord) throw Error(ErrorCode::ShapeError, "decode_chord: z_chd shape");
  auto h = ad::tanh(chord_dec_init_.forward(z_chd));
  std::vector<ad::Var> outs;
  for (int f = 0; f < kBeatsPerSegment; ++f) {
    Mat prev = Mat::Zero(b, kChordFrameDim);
    if (f > 0) {
      for (Eigen::Index i = 0; i < b; ++i) {
        const auto v = teacher[i].frames[f - 1].to_vector();
        for (int d = 0; d < kChordFrameDim; ++d) prev(i, d) = v[d];
      }
    }
    const std::vector<ad::Var> parts{ad::constant(std::move(prev)), z_chd};
    h = chord_dec_.step(chord_dec_.input_projection(ad::concat_cols(parts)), h);
    outs.push_back(h);
  }
  const auto out = chord_dec_out_.forward(ad::concat_rows(outs));
  return {ad::slice_cols(out, 0, 12), ad::slice_cols(out, 12, 12), ad::slice_cols(out, 24, 12)};
}

std::vector<ChordProgression> Model::reconstruct_chords(const ChordLogits& logits, int batch) const {
  std::vector<ChordProgression> out(batch);
  for (int f = 0; f < kBeatsPerSegment; ++f) {
    for (int i = 0; i < batch; ++i) {
      const Eigen::Index row = static_cast<Eigen::Index>(f) * batch + i;
      Eigen::Index r, bs;
      logits.root.value().row(row).maxCoeff(&r);
      logits.bass.value().row(row).maxCoeff(&bs);
      auto& frame = out[i].frames[f];
      frame.root[r] = 1;
      frame.bass[bs] = 1;
      for (int p = 0; p < 12; ++p) frame.chroma[p] = logits.chroma.value()(row, p) > 0.0 ? 1 : 0;
    }
  }
  return out;
}

Posterior Model::texture_encode(const std::string& prefix, const Mat& patches, Eigen::Index batch,
                                Eigen::Index time_patches, Eigen::Index key_patches) const {
  const bool audio = prefix == part::kAudioEncoder;
  const auto& conv = audio ? audio_conv_ : sym_conv_;
  const auto& gru = audio ? audio_gru_ : sym_gru_;
  const auto& mean = audio ? audio_mean_ : sym_mean_;
  const auto& logvar = audio ? audio_logvar_ : sym_logvar_;

  const auto feat = ad::relu(conv.forward(ad::constant(patches)));
  const auto seq = ad::reshape(feat, time_patches * batch, key_patches * config_.conv_channels);
  const auto gx = gru.input_projection(seq);
  auto h = ad::zeros(batch, config_.encoder_hidden);
  for (Eigen::Index t = 0; t < time_patches; ++t) h = gru.step(ad::slice_rows(gx, t * batch, batch), h);
  return {mean.forward(h), ad::soft_bound(logvar.forward(h), kLogVarBound)};
}

Posterior Model::encode_audio(const std::vector<const TranscriberEmbedding*>& embeddings) const {
  for (const auto* e : embeddings) {
    if (!e || e->data().size() != static_cast<std::size_t>(kEmbedChannels) * kEmbedFrames * kPianoKeys) {
      throw Error(ErrorCode::ShapeError, "audio encoder expects 158x88x3 embeddings");
    }
  }
  const auto b = static_cast<Eigen::Index>(embeddings.size());
  return texture_encode(part::kAudioEncoder, embedding_patches(embeddings), b,
                        ceil_div(kEmbedFrames, kConvKernelTime), ceil_div(kPianoKeys, kConvKernelKey));
}

Posterior Model::encode_symbolic(const std::vector<PianoRoll>& rolls) const {
  const auto b = static_cast<Eigen::Index>(rolls.size());
  return texture_encode(part::kSymbolicEncoder, roll_patches(rolls), b, kSegmentSteps / kConvKernelTime,
                        ceil_div(kPitchCount, kConvKernelKey));
}

FeaturePrediction Model::predict_features(const ad::Var& z_aud) const {
  if (z_aud.cols() != kZAudio) throw Error(ErrorCode::ShapeError, "predict_features: z_aud must be 192-d");
  const auto h = ad::tanh(feat_hidden_.forward(z_aud));
  const auto out = feat_out_.forward(h);
  return {ad::slice_cols(out, 0, kSegmentSteps), ad::slice_cols(out, kSegmentSteps, kSegmentSteps),
          ad::clamp01(ad::slice_cols(out, 2 * kSegmentSteps, kSegmentSteps))};
}

DecoderOutput Model::decode_arrangement(const ad::Var& z, const FeatureBatch& feats,
                                        const std::vector<SegmentScore>& teacher) const {
  const auto b = static_cast<Eigen::Index>(teacher.size());
  if (z.rows() != b || z.cols() != kZTotal) throw Error(ErrorCode::ShapeError, "decode_arrangement: z must be Bx512");
  for (const Mat* m : {&feats.bass, &feats.melody, &feats.intensity}) {
    if (m->rows() != b) throw Error(ErrorCode::ShapeError, "decode_arrangement: feature batch size");
    if (m->cols() != kSegmentSteps) throw Error(ErrorCode::ContractViolation, "feature series must have 32 steps");
  }
  const Eigen::Index rows = kSegmentSteps * b;

  std::vector<std::vector<std::vector<NoteEvent>>> steps(b);
  for (Eigen::Index i = 0; i < b; ++i) steps[i] = notes_by_step(teacher[i], config_.max_notes);

  Mat x = Mat::Zero(rows, kTimeInput);
  for (int t = 0; t < kSegmentSteps; ++t) {
    for (Eigen::Index i = 0; i < b; ++i) {
      const Eigen::Index r = t * b + i;
      x(r, 0) = feats.bass(i, t);
      x(r, 1) = feats.melody(i, t);
      x(r, 2) = feats.intensity(i, t);
      if (t > 0) {
        for (const auto& n : steps[i][t - 1]) x(r, 3 + n.pitch) = 1.0;
      }
    }
  }
  const auto gx_all = time_gru_.input_projection(ad::constant(std::move(x)));
  const auto zg = time_z_.forward(z);
  auto h = ad::tanh(time_init_.forward(z));
  std::vector<ad::Var> hs;
  hs.reserve(kSegmentSteps);
  for (int t = 0; t < kSegmentSteps; ++t) {
    h = time_gru_.step(ad::add(ad::slice_rows(gx_all, t * b, b), zg), h);
    hs.push_back(h);
  }

  DecoderOutput out;
  out.batch = static_cast<int>(b);
  out.contexts = ad::concat_rows(hs);
  out.count_logits = count_head_.forward(out.contexts);
  out.count_targets.resize(rows);
  int slots = 0;
  for (int t = 0; t < kSegmentSteps; ++t) {
    for (Eigen::Index i = 0; i < b; ++i) {
      const int c = static_cast<int>(steps[i][t].size());
      out.count_targets[t * b + i] = c;
      slots = std::max(slots, c);
    }
  }
  out.slots = slots;
  if (slots == 0) return out;

  std::vector<int> pitch_in(slots * rows, kPitchStart), dur_in(slots * rows, kDurationStart);
  out.pitch_targets.assign(slots * rows, -1);
  out.duration_targets.assign(slots * rows, -1);
  std::vector<int> pitch_cond(slots * rows, kPitchStart);
  for (int s = 0; s < slots; ++s) {
    for (int t = 0; t < kSegmentSteps; ++t) {
      for (Eigen::Index i = 0; i < b; ++i) {
        const auto& notes = steps[i][t];
        const std::size_t idx = static_cast<std::size_t>(s) * rows + t * b + i;
        if (s > 0 && s <= static_cast<int>(notes.size())) {
          pitch_in[idx] = notes[s - 1].pitch;
          dur_in[idx] = notes[s - 1].duration_steps - 1;
        }
        if (s < static_cast<int>(notes.size())) {
          out.pitch_targets[idx] = notes[s].pitch;
          out.duration_targets[idx] = notes[s].duration_steps - 1;
          pitch_cond[idx] = notes[s].pitch;
        }
      }
    }
  }
  const auto tokens = ad::add(ad::gather_rows(*pitch_embed_, pitch_in), ad::gather_rows(*duration_embed_, dur_in));
  const auto gx_notes = note_gru_.input_projection(tokens);
  auto hn = ad::tanh(note_init_.forward(out.contexts));
  std::vector<ad::Var> outs;
  for (int s = 0; s < slots; ++s) {
    hn = note_gru_.step(ad::slice_rows(gx_notes, s * rows, rows), hn);
    outs.push_back(hn);
  }
  const auto note_states = ad::concat_rows(outs);
  out.pitch_logits = pitch_head_.forward(note_states);
  const std::vector<ad::Var> dur_parts{note_states, ad::gather_rows(*pitch_embed_, pitch_cond)};
  out.duration_logits = duration_head_.forward(ad::concat_cols(dur_parts));
  return out;
}

std::vector<SegmentScore> Model::sample_arrangement(const ad::Var& z, const FeatureBatch& feats,
                                                    const DecodeOptions& options) const {
  const Eigen::Index b = z.rows();
  if (z.cols() != kZTotal) throw Error(ErrorCode::ShapeError, "sample_arrangement: z must be Bx512");
  for (const Mat* m : {&feats.bass, &feats.melody, &feats.intensity}) {
    if (m->rows() != b) throw Error(ErrorCode::ShapeError, "sample_arrangement: feature batch size");
    if (m->cols() != kSegmentSteps) throw Error(ErrorCode::ContractViolation, "feature series must have 32 steps");
  }
  // Inference never needs gradients; detach the latent.
  const auto zc = ad::constant(z.value());
  Rng rng(options.seed);
  std::vector<std::vector<NoteEvent>> notes(b);
  std::vector<std::vector<int>> prev_pitches(b);
  const auto zg = time_z_.forward(zc);
  auto h = ad::tanh(time_init_.forward(zc));
  for (int t = 0; t < kSegmentSteps; ++t) {
    Mat x = Mat::Zero(b, kTimeInput);
    for (Eigen::Index i = 0; i < b; ++i) {
      x(i, 0) = feats.bass(i, t);
      x(i, 1) = feats.melody(i, t);
      x(i, 2) = feats.intensity(i, t);
      for (int p : prev_pitches[i]) x(i, 3 + p) = 1.0;
      prev_pitches[i].clear();
    }
    h = time_gru_.step(ad::add(time_gru_.input_projection(ad::constant(std::move(x))), zg), h);
    const auto counts = count_head_.forward(h);
    std::vector<int> want(b);
    int max_count = 0;
    for (Eigen::Index i = 0; i < b; ++i) {
      want[i] = pick(counts.value().row(i), options, rng);
      max_count = std::max(max_count, want[i]);
    }
    if (max_count == 0) continue;

    auto hn = ad::tanh(note_init_.forward(h));
    std::vector<int> last_pitch(b, kPitchStart), last_dur(b, kDurationStart);
    std::vector<bool> active(b);
    for (Eigen::Index i = 0; i < b; ++i) active[i] = want[i] > 0;
    for (int s = 0; s < max_count; ++s) {
      const auto tokens =
          ad::add(ad::gather_rows(*pitch_embed_, last_pitch), ad::gather_rows(*duration_embed_, last_dur));
      hn = note_gru_.step(note_gru_.input_projection(tokens), hn);
      const auto pl = pitch_head_.forward(hn);
      std::vector<int> chosen(b, kPitchStart);
      for (Eigen::Index i = 0; i < b; ++i) {
        if (!active[i]) continue;
        const int floor = s == 0 ? 0 : last_pitch[i] + 1;  // pitch-ascending within a step
        const int p = pick(pl.value().row(i), options, rng, floor);
        if (p < 0) {
          active[i] = false;
          continue;
        }
        chosen[i] = p;
      }
      const std::vector<ad::Var> dur_parts{hn, ad::gather_rows(*pitch_embed_, chosen)};
      const auto dl = duration_head_.forward(ad::concat_cols(dur_parts));
      for (Eigen::Index i = 0; i < b; ++i) {
        if (!active[i]) continue;
        const int d = pick(dl.value().row(i), options, rng) + 1;
        notes[i].push_back({t, chosen[i], d});
        prev_pitches[i].push_back(chosen[i]);
        last_pitch[i] = chosen[i];
        last_dur[i] = d - 1;
        if (s + 1 >= want[i]) active[i] = false;
      }
    }
  }
  std::vector<SegmentScore> out;
  out.reserve(b);
  for (auto& n : notes) out.push_back(SegmentScore::from_notes(std::move(n)));
  return out;
}

}  // namespace a2s
