#include "a2s/inference.hpp"

#include "a2s/error.hpp"
#include "a2s/midi.hpp"

namespace a2s {

namespace {

bool uses_chord(Variant v) { return v == Variant::Full || v == Variant::ChordOnly; }
bool uses_audio(Variant v) { return v != Variant::ChordOnly; }

Mat sigmoid_of(const Mat& logits) { return (1.0 / (1.0 + (-logits.array()).exp())).matrix(); }

}  // namespace

void ArrangeRequest::validate() const {
  if (!(temperature > 0.0)) throw Error(ErrorCode::UsageError, "temperature must be positive");
}

std::unique_ptr<TranscriberBackend> transcriber_for(const TrainConfig& cfg) {
  return make_transcriber(cfg.transcriber_backend, cfg.transcriber_weights);
}

std::vector<SegmentInput> load_segments(const std::filesystem::path& audio, const std::filesystem::path& beats,
                                        const std::filesystem::path& chords, const TranscriberBackend& backend) {
  const auto wave = read_wav(audio);
  const auto grid = BeatGrid::load(beats);
  const auto annotation = ChordAnnotation::load(chords);
  const auto starts = segment_starts(grid);
  if (starts.empty()) {
    throw Error(ErrorCode::AnnotationGap, beats.string() + ": beat annotation covers no full 8-beat segment from a downbeat");
  }
  const auto ext = grid.with_extrapolated_end();
  std::vector<SegmentInput> out;
  for (int s : starts) {
    SegmentInput in;
    in.chords = annotation.progression_at(s);
    in.embedding = transcribe_embed(stretch_and_resample(wave, ext, static_cast<std::size_t>(s)), backend);
    in.start_beat = s;
    out.push_back(std::move(in));
  }
  return out;
}

Arranger::Arranger(const Checkpoint& ckpt, bool allow_early, std::vector<std::string>* warnings) {
  if (!ckpt.position.reached_finetune) {
    const std::string msg = "checkpoint stopped at step " + std::to_string(ckpt.position.step) + " (" +
                            to_string(ckpt.position.stage) + ") and never reached the fine-tuning stage";
    if (!allow_early) throw Error(ErrorCode::CheckpointStageError, msg + "; pass --allow-early to use it anyway");
    if (warnings) warnings->push_back(msg);
  }
  owned_ = model_from_checkpoint(ckpt);
  model_ = owned_.get();
}

Arranger::Arranger(const Model& model) : model_(&model) {}

Arranger::Latents Arranger::conditioning(const SegmentInput& in, bool sample_all, std::uint64_t seed) const {
  const auto v = model_->config().variant;
  Rng rng = Rng::derive({seed, 0xC0D0, static_cast<std::uint64_t>(in.start_beat)});
  auto pick = [&](const Posterior& p) {
    if (!sample_all) return ad::constant(p.mean.value());
    Mat noise(1, p.mean.cols());
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = rng.normal();
    return ad::constant(ad::reparameterize(p.mean, p.logvar, noise).value());
  };
  Latents lat;
  lat.z_chd = uses_chord(v) ? pick(model_->encode_chord({in.chords})) : ad::zeros(1, kZChord);
  lat.z_aud = uses_audio(v) ? pick(model_->encode_audio({&in.embedding})) : ad::zeros(1, kZAudio);
  return lat;
}

Mat Arranger::prior_texture(std::uint64_t seed, int segment) const {
  Rng rng = Rng::derive({seed, 0x5E9, static_cast<std::uint64_t>(segment)});
  Mat z(1, kZSymbolic);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = rng.normal();
  return z;
}

Mat Arranger::texture_of(const SegmentScore& score) const {
  return model_->encode_symbolic({score_to_pianoroll(score)}).mean.value();
}

SegmentScore Arranger::decode(const Latents& lat, const Mat& z_sym, const DecodeOptions& opt,
                              SymbolicFeatures* predicted) const {
  const auto fp = model_->predict_features(lat.z_aud);
  FeatureBatch feats{sigmoid_of(fp.bass_logits.value()), sigmoid_of(fp.melody_logits.value()), fp.intensity.value()};
  if (predicted) *predicted = fp.series(0);
  const Mat sym = uses_chord(model_->config().variant) ? z_sym : Mat::Zero(1, kZSymbolic);
  const std::vector<ad::Var> parts{lat.z_chd, lat.z_aud, ad::constant(sym)};
  return model_->sample_arrangement(ad::concat_cols(parts), feats, opt).front();
}

DecodeOptions Arranger::options_for(const ArrangeRequest& req, int segment) const {
  DecodeOptions opt;
  opt.greedy = !req.sample;
  opt.temperature = req.temperature;
  opt.seed = Rng::derive({req.seed, 0xDEC0, static_cast<std::uint64_t>(segment)}).next_u64();
  return opt;
}

ArrangeResult Arranger::arrange(const std::vector<SegmentInput>& segments, const ArrangeRequest& req,
                                const std::optional<SegmentScore>& first_context) const {
  req.validate();
  ArrangeResult result;
  std::vector<GridNote> notes;
  for (std::size_t k = 0; k < segments.size(); ++k) {
    const int idx = static_cast<int>(k);
    const auto lat = conditioning(segments[k], req.sample_all, req.seed);
    Mat z_sym;
    if (req.mode == FinetuneMode::Prior) {
      z_sym = prior_texture(req.seed, idx);
    } else {
      const SegmentScore context = k == 0 ? first_context.value_or(SegmentScore{}) : result.segments.back();
      z_sym = texture_of(context);
    }
    SymbolicFeatures feats;
    auto seg = decode(lat, z_sym, options_for(req, idx), &feats);
    append_segment(notes, seg, segments[k].start_beat);
    result.start_beats.push_back(segments[k].start_beat);
    result.segments.push_back(std::move(seg));
    result.predicted_features.push_back(feats);
    result.total_beats = segments[k].start_beat + kBeatsPerSegment;
  }
  result.midi = encode_midi(notes, result.total_beats);
  return result;
}

SegmentScore Arranger::style_transfer_chord(const SegmentInput& source, const ChordProgression& new_chords,
                                            const ArrangeRequest& req, int segment_index) const {
  SegmentInput swapped = source;
  swapped.chords = new_chords;
  const auto lat = conditioning(swapped, req.sample_all, req.seed);
  return decode(lat, prior_texture(req.seed, segment_index), options_for(req, segment_index));
}

SegmentScore Arranger::style_transfer_texture(const SegmentInput& source, const SegmentScore& donor,
                                              const ArrangeRequest& req, int segment_index) const {
  const auto lat = conditioning(source, req.sample_all, req.seed);
  return decode(lat, texture_of(donor), options_for(req, segment_index));
}

ArrangeResult arrange(const ArrangeRequest& req, const Checkpoint& ckpt) {
  req.validate();
  std::vector<std::string> warnings;
  Arranger arranger(ckpt, req.allow_early, &warnings);
  const auto backend = transcriber_for(ckpt.train);
  const auto segments = load_segments(req.audio, req.beats, req.chords, *backend);
  std::optional<SegmentScore> context;
  if (req.mode == FinetuneMode::Autoregressive && req.symbolic_hint) {
    context = read_midi(*req.symbolic_hint).segment(segments.front().start_beat);
  }
  auto result = arranger.arrange(segments, req, context);
  result.warnings.insert(result.warnings.begin(), warnings.begin(), warnings.end());
  return result;
}

ArrangeResult run_ablation(Variant variant, const ArrangeRequest& req, const Checkpoint& ckpt) {
  if (ckpt.model.variant != variant) {
    throw Error(ErrorCode::ConfigMismatch, std::string("checkpoint was trained as ") + to_string(ckpt.model.variant) +
                                               ", not " + to_string(variant));
  }
  return arrange(req, ckpt);
}

}  // namespace a2s
