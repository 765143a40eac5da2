#include "a2s/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "a2s/error.hpp"
#include "a2s/io_util.hpp"

namespace a2s {

OnsetScore onset_f1(const FeatureSeries& generated, const FeatureSeries& reference) {
  int hit = 0, gen = 0, ref = 0;
  for (int t = 0; t < kSegmentSteps; ++t) {
    const bool g = generated[t] > 0.5;
    const bool r = reference[t] > 0.5;
    hit += g && r;
    gen += g;
    ref += r;
  }
  if (gen == 0 && ref == 0) return {1.0, 1.0, 1.0};
  OnsetScore s;
  s.precision = gen ? static_cast<double>(hit) / gen : 0.0;
  s.recall = ref ? static_cast<double>(hit) / ref : 0.0;
  s.f1 = hit ? 2.0 * hit / (gen + ref) : 0.0;
  return s;
}

double pearson(const FeatureSeries& a, const FeatureSeries& b) {
  double ma = 0, mb = 0;
  for (int t = 0; t < kSegmentSteps; ++t) {
    ma += a[t];
    mb += b[t];
  }
  ma /= kSegmentSteps;
  mb /= kSegmentSteps;
  double sab = 0, saa = 0, sbb = 0;
  for (int t = 0; t < kSegmentSteps; ++t) {
    sab += (a[t] - ma) * (b[t] - mb);
    saa += (a[t] - ma) * (a[t] - ma);
    sbb += (b[t] - mb) * (b[t] - mb);
  }
  constexpr double kFlat = 1e-12;
  if (saa < kFlat && sbb < kFlat) return std::abs(ma - mb) < 1e-9 ? 1.0 : 0.0;
  if (saa < kFlat || sbb < kFlat) return 0.0;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

std::array<double, 12> pitch_class_histogram(const SegmentScore& score) {
  std::array<double, 12> h{};
  for (const auto& n : score.notes()) h[n.pitch % 12] += n.duration_steps;
  return h;
}

double chroma_similarity(const SegmentScore& score, const ChordProgression& chords) {
  double total = 0.0;
  for (int beat = 0; beat < kBeatsPerSegment; ++beat) {
    const int lo = beat * kStepsPerBeat, hi = lo + kStepsPerBeat;
    std::array<double, 12> h{};
    for (const auto& n : score.notes()) {
      const int overlap = std::min(hi, n.onset_step + n.duration_steps) - std::max(lo, n.onset_step);
      if (overlap > 0) h[n.pitch % 12] += overlap;
    }
    std::array<double, 12> c{};
    for (int p = 0; p < 12; ++p) c[p] = chords.frames[beat].chroma[p];
    total += cosine(h, c);
  }
  return total / kBeatsPerSegment;
}

FeatureSeries top_voice_onsets(const SegmentScore& score) {
  FeatureSeries s{};
  for (const auto& n : score.notes()) s[n.onset_step] = 1.0;
  return s;
}

std::string EvalReport::to_csv() const {
  std::ostringstream o;
  o.precision(6);
  o << "# F1 columns are asymmetric: precision = generated onsets found in the reference, recall = reference "
       "onsets reproduced. Correlation is symmetric.\n";
  o << "segment,start_beat,chroma_similarity,bass_onset_precision,bass_onset_recall,bass_onset_f1,"
       "melody_onset_precision,melody_onset_recall,melody_onset_f1,intensity_correlation\n";
  auto row = [&](const std::string& name, const SegmentMetrics& m) {
    o << name << ',' << m.start_beat << ',' << m.chroma_similarity << ',' << m.bass_onset.precision << ','
      << m.bass_onset.recall << ',' << m.bass_onset.f1 << ',' << m.melody_onset.precision << ','
      << m.melody_onset.recall << ',' << m.melody_onset.f1 << ',' << m.intensity_correlation << '\n';
  };
  for (std::size_t i = 0; i < segments.size(); ++i) row(std::to_string(i), segments[i]);
  row("mean", mean);
  return o.str();
}

EvalReport evaluate(const std::vector<SegmentScore>& generated, const std::vector<SegmentScore>& reference,
                    const std::vector<SegmentScore>& reference_melody, const std::vector<ChordProgression>& chords,
                    const std::vector<int>& start_beats) {
  const auto n = generated.size();
  if (reference.size() != n || chords.size() != n || start_beats.size() != n ||
      (!reference_melody.empty() && reference_melody.size() != n)) {
    throw Error(ErrorCode::LengthMismatch, "generated has " + std::to_string(n) + " segments, reference has " +
                                               std::to_string(reference.size()));
  }
  EvalReport report;
  report.mean.start_beat = -1;
  for (std::size_t i = 0; i < n; ++i) {
    SegmentMetrics m;
    m.start_beat = start_beats[i];
    m.chroma_similarity = chroma_similarity(generated[i], chords[i]);
    m.bass_onset = onset_f1(extract_bass_onset(generated[i]), extract_bass_onset(reference[i]));
    const auto ref_melody = reference_melody.empty() ? top_voice_onsets(reference[i])
                                                     : extract_melody_onset(reference_melody[i]);
    m.melody_onset = onset_f1(top_voice_onsets(generated[i]), ref_melody);
    m.intensity_correlation =
        pearson(extract_rhythmic_intensity(generated[i]), extract_rhythmic_intensity(reference[i]));
    report.segments.push_back(m);
  }
  if (n > 0) {
    auto& a = report.mean;
    for (const auto& m : report.segments) {
      a.chroma_similarity += m.chroma_similarity / n;
      a.bass_onset.precision += m.bass_onset.precision / n;
      a.bass_onset.recall += m.bass_onset.recall / n;
      a.bass_onset.f1 += m.bass_onset.f1 / n;
      a.melody_onset.precision += m.melody_onset.precision / n;
      a.melody_onset.recall += m.melody_onset.recall / n;
      a.melody_onset.f1 += m.melody_onset.f1 / n;
      a.intensity_correlation += m.intensity_correlation / n;
    }
  }
  return report;
}

std::string svg_line_plot(const std::string& title, const std::vector<Series>& series, const std::string& x_label) {
  constexpr double W = 720, H = 400, L = 60, R = 170, T = 40, B = 50;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
  static const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};

  std::ostringstream o;
  o.precision(5);
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << L << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\">" << title << "</text>\n"
    << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n"
    << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" font-family=\"sans-serif\" font-size=\"12\">"
    << x_label << "</text>\n";
  for (int k = 0; k <= 4; ++k) {
    const double y = y0 + (y1 - y0) * k / 4.0, x = x0 + (x1 - x0) * k / 4.0;
    o << "<text x=\"4\" y=\"" << py(y) + 4 << "\" font-family=\"sans-serif\" font-size=\"10\">" << y << "</text>\n"
      << "<text x=\"" << px(x) - 10 << "\" y=\"" << H - B + 14 << "\" font-family=\"sans-serif\" font-size=\"10\">" << x
      << "</text>\n";
  }
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kColors[k % std::size(kColors)];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (std::isfinite(s.y[i])) o << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
    }
    o << "\"/>\n"
      << "<text x=\"" << W - R + 10 << "\" y=\"" << T + 16 * (k + 1) << "\" fill=\"" << color
      << "\" font-family=\"sans-serif\" font-size=\"12\">" << s.label << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

void write_loss_plot(const std::filesystem::path& metrics_csv, const std::filesystem::path& svg) {
  std::istringstream in(read_text_file(metrics_csv));
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::DataError, metrics_csv.string() + ": empty metrics file");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) header.push_back(f);
  }
  const std::vector<std::string> wanted = {"total", "recon_arrangement", "recon_chord", "recon_features", "kl_chd",
                                           "kl_aud", "kl_sym"};
  std::vector<Series> series;
  std::vector<int> cols;
  int step_col = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "step") step_col = static_cast<int>(i);
  }
  if (step_col < 0) throw Error(ErrorCode::DataError, metrics_csv.string() + ": no step column");
  for (const auto& w : wanted) {
    auto it = std::find(header.begin(), header.end(), w);
    if (it != header.end()) {
      series.push_back({w, {}, {}});
      cols.push_back(static_cast<int>(it - header.begin()));
    }
  }
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string v;
    while (std::getline(ss, v, ',')) f.push_back(v);
    if (f.size() != header.size()) continue;
    const double step = std::stod(f[step_col]);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      series[k].x.push_back(step);
      series[k].y.push_back(std::stod(f[cols[k]]));
    }
  }
  write_text_atomic(svg, svg_line_plot("training loss", series, "step"));
}

}  // namespace a2s
