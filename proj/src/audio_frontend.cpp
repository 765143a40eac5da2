#include "a2s/audio_frontend.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>

#include "a2s/error.hpp"
#include "a2s/io_util.hpp"
#include "a2s/tensor_file.hpp"

namespace a2s {

namespace {

constexpr double kBeatSeconds = 60.0 / kNominalBpm;
constexpr int kPvWindow = 1024;
constexpr int kPvHop = 256;

std::vector<double> hann(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

double princarg(double phase) {
  return phase - 2.0 * std::numbers::pi * std::round(phase / (2.0 * std::numbers::pi));
}

// Piecewise-linear interpolation through (anchor_out, anchor_in), extended
// linearly past both ends.
double map_position(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
  std::size_t j = std::upper_bound(xs.begin(), xs.end(), x) - xs.begin();
  j = std::clamp<std::size_t>(j, 1, xs.size() - 1);
  const double t = (x - xs[j - 1]) / (xs[j] - xs[j - 1]);
  return ys[j - 1] + t * (ys[j] - ys[j - 1]);
}

void windowed_frame(const std::vector<double>& x, long center, const std::vector<double>& win,
                    std::vector<double>& out) {
  const long n = static_cast<long>(win.size());
  const long first = center - n / 2;
  for (long i = 0; i < n; ++i) {
    const long k = first + i;
    out[i] = (k >= 0 && k < static_cast<long>(x.size())) ? x[k] * win[i] : 0.0;
  }
}

double sinc_interp(const std::vector<double>& x, double pos) {
  constexpr int kHalf = 16;
  const long base = static_cast<long>(std::floor(pos));
  double acc = 0.0;
  for (long k = base - kHalf + 1; k <= base + kHalf; ++k) {
    if (k < 0 || k >= static_cast<long>(x.size())) continue;
    const double d = pos - k;
    const double s = d == 0.0 ? 1.0 : std::sin(std::numbers::pi * d) / (std::numbers::pi * d);
    const double w = 0.5 + 0.5 * std::cos(std::numbers::pi * d / kHalf);
    acc += x[k] * s * w;
  }
  return acc;
}

}  // namespace

BeatGrid BeatGrid::parse(std::string_view text) {
  BeatGrid g;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#' || line == "\r") continue;
    std::istringstream fields(line);
    double t;
    int flag;
    if (!(fields >> t >> flag) || (flag != 0 && flag != 1)) {
      throw Error(ErrorCode::DataError, "beat annotation line " + std::to_string(line_no) + " is malformed");
    }
    g.beat_times.push_back(t);
    g.downbeat.push_back(flag == 1);
  }
  g.validate();
  return g;
}

BeatGrid BeatGrid::load(const std::filesystem::path& path) { return parse(read_text_file(path)); }

std::string BeatGrid::serialize() const {
  std::ostringstream out;
  out.precision(10);
  for (std::size_t i = 0; i < size(); ++i) out << beat_times[i] << '\t' << (downbeat[i] ? 1 : 0) << '\n';
  return out.str();
}

void BeatGrid::validate() const {
  if (downbeat.size() != beat_times.size()) throw Error(ErrorCode::DataError, "beat/downbeat count mismatch");
  for (std::size_t i = 1; i < beat_times.size(); ++i) {
    if (!(beat_times[i] > beat_times[i - 1])) {
      throw Error(ErrorCode::DataError, "beat times must be strictly increasing (index " + std::to_string(i) + ")");
    }
  }
}

BeatGrid BeatGrid::with_extrapolated_end() const {
  BeatGrid g = *this;
  if (g.size() >= 2) {
    g.beat_times.push_back(2 * g.beat_times.back() - g.beat_times[g.size() - 2]);
    g.downbeat.push_back(false);
  }
  return g;
}

std::vector<double> phase_vocoder(const std::vector<double>& input, const std::vector<double>& anchor_out,
                                  const std::vector<double>& anchor_in, std::size_t n_out) {
  const auto win = hann(kPvWindow);
  constexpr int kBins = kPvWindow / 2 + 1;
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);

  std::vector<double> out(n_out + kPvWindow, 0.0);
  std::vector<double> norm(n_out + kPvWindow, 0.0);
  std::vector<double> frame(kPvWindow), ahead(kPvWindow), synth(kPvWindow);
  std::vector<std::complex<double>> spec_now, spec_ahead, spec_out(kBins);
  std::vector<double> phase(kBins, 0.0);

  // Output frames centered at k*hop, stored with a window/2 offset.
  const long n_frames = static_cast<long>(n_out) / kPvHop + 2;
  for (long k = 0; k < n_frames; ++k) {
    const double center_out = static_cast<double>(k) * kPvHop;
    const long center_in = std::lround(map_position(anchor_out, anchor_in, center_out));
    windowed_frame(input, center_in, win, frame);
    windowed_frame(input, center_in + kPvHop, win, ahead);
    fft.fwd(spec_now, frame);
    fft.fwd(spec_ahead, ahead);
    for (int b = 0; b < kBins; ++b) {
      const double mag = std::abs(spec_now[b]);
      if (k == 0) {
        phase[b] = std::arg(spec_now[b]);
      } else {
        const double omega = 2.0 * std::numbers::pi * b / kPvWindow;
        const double dphi = princarg(std::arg(spec_ahead[b]) - std::arg(spec_now[b]) - omega * kPvHop);
        const double inst = omega + dphi / kPvHop;
        phase[b] = princarg(phase[b] + inst * kPvHop);
      }
      spec_out[b] = std::polar(mag, phase[b]);
    }
    fft.inv(synth, spec_out);
    const long start = k * kPvHop;  // = center_out - window/2 + window/2 offset
    for (int i = 0; i < kPvWindow; ++i) {
      const long p = start + i;
      if (p < 0 || p >= static_cast<long>(out.size())) continue;
      out[p] += synth[i] * win[i];
      norm[p] += win[i] * win[i];
    }
  }
  std::vector<double> result(n_out);
  for (std::size_t n = 0; n < n_out; ++n) {
    const std::size_t p = n + kPvWindow / 2;
    result[n] = norm[p] > 1e-6 ? out[p] / norm[p] : 0.0;
  }
  return result;
}

AudioSegment stretch_and_resample(const Waveform& raw, const BeatGrid& grid, std::size_t start_beat) {
  grid.validate();
  if (grid.size() < 9 || start_beat + 8 >= grid.size()) {
    throw Error(ErrorCode::InsufficientBeats, "need beats " + std::to_string(start_beat) + ".." +
                                                  std::to_string(start_beat + 8) + ", grid has " +
                                                  std::to_string(grid.size()));
  }
  if (!grid.downbeat[start_beat]) {
    throw Error(ErrorCode::NonDownbeatStart, "beat " + std::to_string(start_beat) + " is not a downbeat");
  }
  const Waveform wave = raw.sample_rate == kSampleRate ? raw : resample(raw, kSampleRate);

  std::vector<double> anchor_out(9), anchor_in(9);
  bool identity = true;
  for (int i = 0; i <= 8; ++i) {
    anchor_out[i] = i * kBeatSeconds * kSampleRate;
    anchor_in[i] = grid.beat_times[start_beat + i] * kSampleRate;
    if (i > 0) {
      const double len = grid.beat_times[start_beat + i] - grid.beat_times[start_beat + i - 1];
      if (std::abs(len - kBeatSeconds) > 1e-9) identity = false;
    }
  }

  AudioSegment seg;
  if (identity) {
    const double offset = anchor_in[0];
    const double whole = std::round(offset);
    seg.samples.resize(kSegmentSamples);
    if (std::abs(offset - whole) < 1e-6) {
      const auto base = static_cast<long>(whole);
      for (long n = 0; n < kSegmentSamples; ++n) {
        const long k = base + n;
        seg.samples[n] = (k >= 0 && k < static_cast<long>(wave.samples.size())) ? wave.samples[k] : 0.0;
      }
    } else {
      for (long n = 0; n < kSegmentSamples; ++n) seg.samples[n] = sinc_interp(wave.samples, offset + n);
    }
    return seg;
  }
  seg.samples = phase_vocoder(wave.samples, anchor_out, anchor_in, kSegmentSamples);
  return seg;
}

// ---------------------------------------------------------------------------
// Transcriber backends

StubTranscriber::StubTranscriber() : bands_(kPianoKeys) {
  constexpr int kBins = kStftWindow / 2 + 1;
  const double bin_hz = static_cast<double>(kSampleRate) / kStftWindow;
  for (int k = 0; k < kPianoKeys; ++k) {
    const double f = 440.0 * std::pow(2.0, (kLowestKeyPitch + k - 69) / 12.0);
    const double half_width = std::max(1.0, 12.0 * std::log2((f + bin_hz) / f));
    double total = 0.0;
    for (int b = 1; b < kBins; ++b) {
      const double d = 12.0 * std::log2(b * bin_hz / f);
      const double w = 1.0 - std::abs(d) / half_width;
      if (w > 0) {
        bands_[k].push_back({b, w});
        total += w;
      }
    }
    for (auto& [b, w] : bands_[k]) w /= total;
  }
}

std::vector<std::vector<double>> StubTranscriber::key_levels(const std::vector<double>& samples) const {
  const auto win = hann(kStftWindow);
  double win_sum = 0.0;
  for (double w : win) win_sum += w;
  const double power_scale = 1.0 / ((win_sum / 2) * (win_sum / 2));

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> frame(kStftWindow);
  std::vector<std::complex<double>> spec;
  std::vector<double> power(kStftWindow / 2 + 1);
  std::vector<std::vector<double>> levels(kEmbedFrames, std::vector<double>(kPianoKeys, 0.0));
  for (int t = 0; t < kEmbedFrames; ++t) {
    windowed_frame(samples, static_cast<long>(t) * kStftHop, win, frame);
    fft.fwd(spec, frame);
    for (std::size_t b = 0; b < power.size(); ++b) power[b] = std::norm(spec[b]) * power_scale;
    for (int k = 0; k < kPianoKeys; ++k) {
      double e = 0.0;
      for (const auto& [b, w] : bands_[k]) e += w * power[b];
      const double db = 10.0 * std::log10(e + 1e-12);
      levels[t][k] = std::clamp((db + 80.0) / 90.0, 0.0, 1.0);
    }
  }
  return levels;
}

TranscriberEmbedding StubTranscriber::embed(const AudioSegment& segment) const {
  const auto levels = key_levels(segment.samples);
  TranscriberEmbedding e;
  for (int t = 0; t < kEmbedFrames; ++t) {
    for (int k = 0; k < kPianoKeys; ++k) {
      const double prev = t > 0 ? levels[t - 1][k] : 0.0;
      e.at(TranscriberEmbedding::kFrame, t, k) = static_cast<float>(levels[t][k]);
      e.at(TranscriberEmbedding::kVelocity, t, k) = static_cast<float>(levels[t][k]);
      e.at(TranscriberEmbedding::kOnset, t, k) = static_cast<float>(std::max(0.0, levels[t][k] - prev));
    }
  }
  return e;
}

PretrainedTranscriber::PretrainedTranscriber(const std::filesystem::path& weights) {
  if (weights.empty() || !std::filesystem::exists(weights)) {
    throw Error(ErrorCode::BackendUnavailable, "transcriber weights not found: " + weights.string());
  }
  TensorFile file;
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file_bytes(weights);
    file = decode_tensor_file(bytes, "A2STRW01");
  } catch (const Error& e) {
    throw Error(ErrorCode::BackendUnavailable, std::string("cannot load transcriber weights: ") + e.what());
  }
  digest_ = hex64(fnv1a64(bytes));
  static constexpr const char* kHeads[] = {"onset", "frame", "velocity"};
  for (int h = 0; h < 3; ++h) {
    const Mat* w = file.find(std::string(kHeads[h]) + ".weight");
    const Mat* b = file.find(std::string(kHeads[h]) + ".bias");
    if (!w || !b || w->rows() != kPianoKeys || w->cols() != kPianoKeys || b->size() != kPianoKeys) {
      throw Error(ErrorCode::BackendUnavailable, std::string("transcriber weights missing head ") + kHeads[h]);
    }
    weight_[h].assign(kPianoKeys, std::vector<double>(kPianoKeys));
    bias_[h].assign(kPianoKeys, 0.0);
    for (int i = 0; i < kPianoKeys; ++i) {
      bias_[h][i] = (*b)(i);
      for (int j = 0; j < kPianoKeys; ++j) weight_[h][i][j] = (*w)(i, j);
    }
  }
}

std::string PretrainedTranscriber::id() const { return "pretrained:" + digest_; }

TranscriberEmbedding PretrainedTranscriber::embed(const AudioSegment& segment) const {
  const auto levels = features_.key_levels(segment.samples);
  TranscriberEmbedding e;
  for (int t = 0; t < kEmbedFrames; ++t) {
    for (int h = 0; h < 3; ++h) {
      for (int i = 0; i < kPianoKeys; ++i) {
        double acc = bias_[h][i];
        for (int j = 0; j < kPianoKeys; ++j) {
          // onset head sees the positive temporal difference, the others the level
          const double x = h == TranscriberEmbedding::kOnset
                               ? std::max(0.0, levels[t][j] - (t > 0 ? levels[t - 1][j] : 0.0))
                               : levels[t][j];
          acc += weight_[h][i][j] * x;
        }
        e.at(h, t, i) = static_cast<float>(1.0 / (1.0 + std::exp(-acc)));
      }
    }
  }
  return e;
}

std::unique_ptr<TranscriberBackend> make_transcriber(std::string_view kind, const std::filesystem::path& weights) {
  if (kind == "stub") return std::make_unique<StubTranscriber>();
  if (kind == "pretrained") return std::make_unique<PretrainedTranscriber>(weights);
  throw Error(ErrorCode::UsageError, "unknown transcriber backend '" + std::string(kind) + "'");
}

TranscriberEmbedding transcribe_embed(const AudioSegment& segment, const TranscriberBackend& backend) {
  if (segment.samples.size() != static_cast<std::size_t>(kSegmentSamples)) {
    throw Error(ErrorCode::ShapeError, "audio segment must have " + std::to_string(kSegmentSamples) + " samples");
  }
  return backend.embed(segment);
}

void write_identity_transcriber_weights(const std::filesystem::path& path) {
  TensorFile file;
  file.meta = {{"kind", "identity"}, {"keys", kPianoKeys}};
  for (const char* head : {"onset", "frame", "velocity"}) {
    Mat w = Mat::Identity(kPianoKeys, kPianoKeys) * 12.0;
    Mat b = Mat::Constant(1, kPianoKeys, -6.0);
    file.tensors.push_back({std::string(head) + ".weight", w});
    file.tensors.push_back({std::string(head) + ".bias", b});
  }
  save_tensor_file(path, "A2STRW01", file);
}

}  // namespace a2s
