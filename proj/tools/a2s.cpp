// Command-line entry point: prepare, train, arrange, transfer, eval, fixture.

#include <cstdlib>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "a2s/checkpoint.hpp"
#include "a2s/config.hpp"
#include "a2s/dataset.hpp"
#include "a2s/error.hpp"
#include "a2s/eval.hpp"
#include "a2s/fixture.hpp"
#include "a2s/inference.hpp"
#include "a2s/io_util.hpp"
#include "a2s/midi.hpp"
#include "a2s/training.hpp"

namespace fs = std::filesystem;
using namespace a2s;

namespace {

fs::path cache_dir() {
  const char* env = std::getenv("A2S_CACHE");
  return env ? fs::path(env) : fs::path();
}

TrainConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides) {
  KeyValueConfig kv = path.empty() ? KeyValueConfig{} : KeyValueConfig::load(path);
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::UsageError, "--set expects key=value, got '" + o + "'");
    kv.set(o.substr(0, eq), o.substr(eq + 1));
  }
  return TrainConfig::from_kv(kv);
}

std::vector<ChordFrame> parse_chord_list(const std::string& list) {
  std::vector<ChordFrame> frames;
  std::stringstream ss(list);
  std::string label;
  while (std::getline(ss, label, ',')) {
    if (!label.empty()) frames.push_back(parse_chord_label(label));
  }
  if (frames.empty() || kBeatsPerSegment % frames.size() != 0) {
    throw Error(ErrorCode::UsageError, "--new-chords needs 1, 2, 4 or 8 comma-separated labels");
  }
  return frames;
}

struct PrepareArgs {
  std::string manifest, out, backend = "stub", weights;
  bool precompute = false;
  std::uint64_t seed = 0;
  double train_fraction = 0.9;
};

int cmd_prepare(const PrepareArgs& a) {
  const auto songs = load_manifest(a.manifest);
  std::unique_ptr<TranscriberBackend> backend;
  if (a.precompute) backend = make_transcriber(a.backend, a.weights);
  const auto s = prepare_dataset(songs, a.out, backend.get(), a.train_fraction, a.seed);
  std::cout << "songs " << s.songs << ", segments " << s.examples << ", train songs " << s.train_songs.size()
            << ", test songs " << s.test_songs.size() << "\n";
  return 0;
}

struct TrainArgs {
  std::string config, data, out, resume;
  std::vector<std::string> overrides;
  long max_steps = -1;
  bool dry_run = false;
};

int cmd_train(const TrainArgs& a) {
  const auto cfg = resolve_config(a.config, a.overrides);
  if (!fs::is_regular_file(fs::path(a.data) / "index.json")) {
    throw Error(ErrorCode::IoError, "no prepared dataset (index.json) in " + a.data);
  }
  if (a.dry_run) {
    std::cout << cfg.to_text();
    return 0;
  }
  auto data = load_prepared(a.data);
  if (data.train.empty()) throw Error(ErrorCode::DataError, "the training split is empty");
  const auto backend = transcriber_for(cfg);
  ensure_embeddings(data.train, *backend, cache_dir());
  auto examples = cfg.augment ? augment_transpositions(data.train) : data.train;
  std::cout << "training on " << examples.size() << " examples\n";
  Trainer trainer(cfg, std::move(examples));
  if (!a.resume.empty()) trainer.resume(a.resume);
  std::optional<long> stop;
  if (a.max_steps >= 0) stop = a.max_steps;
  const auto summary = trainer.run(a.out, stop, [](const StepRecord& r) {
    if (r.step % 50 == 0) {
      std::cout << "step " << r.step << " [" << to_string(r.stage) << "] total " << r.loss.total << "\n";
    }
  });
  write_loss_plot(fs::path(a.out) / "metrics.csv", fs::path(a.out) / "loss.svg");
  std::cout << "finished at step " << summary.steps << "; checkpoints in " << a.out << "\n";
  return 0;
}

struct ArrangeArgs {
  ArrangeRequest req;
  std::string ckpt, out, mode = "prior", hint, variant;
};

int cmd_arrange(ArrangeArgs& a) {
  a.req.mode = parse_finetune_mode(a.mode);
  if (!a.hint.empty()) a.req.symbolic_hint = a.hint;
  const auto ckpt = load_checkpoint(a.ckpt);
  const auto result = a.variant.empty() ? arrange(a.req, ckpt) : run_ablation(parse_variant(a.variant), a.req, ckpt);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
  write_file_atomic(a.out, result.midi);
  std::cout << "wrote " << result.segments.size() << " segments to " << a.out << "\n";
  return 0;
}

struct TransferArgs {
  ArrangeRequest req;
  std::string kind, ckpt, out, new_chords, donor;
  int segment = 0;
  int donor_beat = 0;
};

int cmd_transfer(TransferArgs& a) {
  if (a.kind != "chord" && a.kind != "texture") throw Error(ErrorCode::UsageError, "--kind must be chord or texture");
  const auto ckpt = load_checkpoint(a.ckpt);
  if (ckpt.position.stage == Stage::Warmup && !a.req.allow_early) {
    throw Error(ErrorCode::CheckpointStageError, "style transfer needs a checkpoint past the warm-up stage (--allow-early)");
  }
  auto model = model_from_checkpoint(ckpt);
  Arranger local(*model);
  const auto backend = transcriber_for(ckpt.train);
  const auto segments = load_segments(a.req.audio, a.req.beats, a.req.chords, *backend);
  if (a.segment < 0 || a.segment >= static_cast<int>(segments.size())) {
    throw Error(ErrorCode::UsageError, "--segment out of range (0.." + std::to_string(segments.size() - 1) + ")");
  }
  const auto& source = segments[a.segment];
  SegmentScore out;
  if (a.kind == "chord") {
    if (a.new_chords.empty()) throw Error(ErrorCode::UsageError, "--new-chords is required for chord transfer");
    const auto frames = parse_chord_list(a.new_chords);
    ChordProgression prog;
    const auto per = kBeatsPerSegment / frames.size();
    for (int b = 0; b < kBeatsPerSegment; ++b) prog.frames[b] = frames[b / per];
    out = local.style_transfer_chord(source, prog, a.req, a.segment);
  } else {
    if (a.donor.empty()) throw Error(ErrorCode::UsageError, "--donor is required for texture transfer");
    out = local.style_transfer_texture(source, read_midi(a.donor).segment(a.donor_beat), a.req, a.segment);
  }
  std::vector<GridNote> notes;
  append_segment(notes, out, 0);
  write_midi(a.out, notes, kBeatsPerSegment);
  std::cout << "wrote " << out.size() << " notes to " << a.out << "\n";
  return 0;
}

struct EvalArgs {
  std::string generated, reference, reference_melody, beats, chords, out, plot;
};

int cmd_eval(const EvalArgs& a) {
  const auto grid = BeatGrid::load(a.beats);
  const auto annotation = ChordAnnotation::load(a.chords);
  const auto gen = read_midi(a.generated);
  const auto ref = read_midi(a.reference);
  const auto starts = segment_starts(grid);
  auto count = [&](const MidiFile& m) {
    std::size_t n = 0;
    for (int s : starts) n += s + kBeatsPerSegment <= m.length_beats() + 1e-9;
    return n;
  };
  const auto n_gen = count(gen), n_ref = count(ref);
  if (n_gen != n_ref) {
    throw Error(ErrorCode::LengthMismatch, "generated MIDI covers " + std::to_string(n_gen) +
                                               " segments but the reference covers " + std::to_string(n_ref));
  }
  std::vector<SegmentScore> g, r, mel;
  std::vector<ChordProgression> chords;
  std::vector<int> used;
  std::optional<MidiFile> melody;
  if (!a.reference_melody.empty()) melody = read_midi(a.reference_melody);
  for (std::size_t i = 0; i < n_gen; ++i) {
    const int s = starts[i];
    g.push_back(gen.segment(s));
    r.push_back(ref.segment(s));
    if (melody) mel.push_back(melody->segment(s));
    chords.push_back(annotation.progression_at(s));
    used.push_back(s);
  }
  const auto report = evaluate(g, r, mel, chords, used);
  write_text_atomic(a.out, report.to_csv());
  std::cout << report.to_csv();
  if (!a.plot.empty()) {
    Series gi{"generated intensity", {}, {}}, ri{"reference intensity", {}, {}};
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto gs = extract_rhythmic_intensity(g[i]);
      const auto rs = extract_rhythmic_intensity(r[i]);
      for (int t = 0; t < kSegmentSteps; ++t) {
        const double x = used[i] + t / static_cast<double>(kStepsPerBeat);
        gi.x.push_back(x);
        gi.y.push_back(gs[t]);
        ri.x.push_back(x);
        ri.y.push_back(rs[t]);
      }
    }
    write_text_atomic(a.plot, svg_line_plot("rhythmic intensity", {gi, ri}, "beat"));
  }
  return 0;
}

int cmd_fixture(const std::string& out, const FixtureOptions& opt) {
  const auto manifest = write_fixture(out, opt);
  std::cout << "wrote " << opt.songs << " songs; manifest " << manifest.string() << "\n";
  return 0;
}

void add_request_flags(CLI::App* cmd, ArrangeRequest& req) {
  cmd->add_option("--audio", req.audio, "Input audio (WAV)")->required();
  cmd->add_option("--beats", req.beats, "Beat annotation (time<TAB>downbeat per line)")->required();
  cmd->add_option("--chords", req.chords, "Chord annotation (start<TAB>end<TAB>label per line)")->required();
  cmd->add_option("--seed", req.seed, "Random seed");
  cmd->add_option("--temperature", req.temperature, "Sampling temperature (with --sample)")->check(CLI::PositiveNumber);
  cmd->add_flag("--sample", req.sample, "Sample notes instead of greedy decoding");
  cmd->add_flag("--sample-all", req.sample_all, "Also sample the chord and audio latents");
  cmd->add_flag("--allow-early", req.allow_early, "Accept checkpoints that never reached fine-tuning");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"a2s: audio-to-symbolic piano arrangement"};
  app.require_subcommand(1);

  PrepareArgs prep;
  auto* c_prep = app.add_subcommand("prepare", "Segment songs from a manifest into training shards");
  c_prep->add_option("--manifest", prep.manifest, "Manifest CSV")->required();
  c_prep->add_option("--out", prep.out, "Output directory")->required();
  c_prep->add_flag("--precompute-embeddings", prep.precompute, "Store transcriber embeddings instead of audio");
  c_prep->add_option("--backend", prep.backend, "Transcriber backend: stub or pretrained");
  c_prep->add_option("--weights", prep.weights, "Weights file for the pretrained backend");
  c_prep->add_option("--seed", prep.seed, "Seed of the song-level split");
  c_prep->add_option("--train-fraction", prep.train_fraction, "Share of songs used for training")->check(CLI::Range(0.0, 1.0));

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Run the three-stage curriculum");
  c_train->add_option("--config", train.config, "Config file (key = value)");
  c_train->add_option("--data", train.data, "Directory written by prepare")->required();
  c_train->add_option("--out", train.out, "Run directory for metrics and checkpoints");
  c_train->add_option("--set", train.overrides, "Override a config key (key=value), repeatable");
  c_train->add_option("--resume", train.resume, "Checkpoint to resume from");
  c_train->add_option("--max-steps", train.max_steps, "Stop after this global step");
  c_train->add_flag("--dry-run", train.dry_run, "Validate inputs and print the resolved config");

  ArrangeArgs arr;
  auto* c_arr = app.add_subcommand("arrange", "Arrange an audio file into a piano MIDI file");
  add_request_flags(c_arr, arr.req);
  c_arr->add_option("--ckpt", arr.ckpt, "Checkpoint")->required();
  c_arr->add_option("--mode", arr.mode, "prior or autoregressive")->check(CLI::IsMember({"prior", "autoregressive"}));
  c_arr->add_option("--symbolic-hint", arr.hint, "MIDI used as the first context in autoregressive mode");
  c_arr->add_option("--variant", arr.variant, "Require an ablation variant: full, audio_only_vae, audio_only_ae, chord_only");
  c_arr->add_option("--out", arr.out, "Output MIDI")->required();

  TransferArgs tr;
  auto* c_tr = app.add_subcommand("transfer", "Swap the chord or texture latent of one segment");
  add_request_flags(c_tr, tr.req);
  c_tr->add_option("--kind", tr.kind, "chord or texture")->required()->check(CLI::IsMember({"chord", "texture"}));
  c_tr->add_option("--ckpt", tr.ckpt, "Checkpoint")->required();
  c_tr->add_option("--segment", tr.segment, "Segment index in the source audio");
  c_tr->add_option("--new-chords", tr.new_chords, "Comma-separated chord labels spread over 8 beats");
  c_tr->add_option("--donor", tr.donor, "MIDI file supplying the texture");
  c_tr->add_option("--donor-beat", tr.donor_beat, "First beat of the donor segment");
  c_tr->add_option("--out", tr.out, "Output MIDI")->required();

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Compare a generated arrangement with a reference");
  c_ev->add_option("--generated", ev.generated, "Generated MIDI")->required();
  c_ev->add_option("--reference", ev.reference, "Reference accompaniment MIDI")->required();
  c_ev->add_option("--reference-melody", ev.reference_melody, "Reference melody MIDI");
  c_ev->add_option("--beats", ev.beats, "Beat annotation")->required();
  c_ev->add_option("--chords", ev.chords, "Chord annotation")->required();
  c_ev->add_option("--out", ev.out, "Report CSV")->required();
  c_ev->add_option("--plot", ev.plot, "Also write an intensity overlay SVG");

  std::string fx_out;
  FixtureOptions fx;
  auto* c_fx = app.add_subcommand("fixture", "Write synthetic songs and a manifest");
  c_fx->add_option("--out", fx_out, "Output directory")->required();
  c_fx->add_option("--songs", fx.songs, "Number of songs")->check(CLI::PositiveNumber);
  c_fx->add_option("--segments", fx.segments_per_song, "8-beat segments per song")->check(CLI::PositiveNumber);
  c_fx->add_option("--seed", fx.seed, "Random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*c_prep) return cmd_prepare(prep);
    if (*c_train) return cmd_train(train);
    if (*c_arr) return cmd_arrange(arr);
    if (*c_tr) return cmd_transfer(tr);
    if (*c_ev) return cmd_eval(ev);
    if (*c_fx) return cmd_fixture(fx_out, fx);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
