#pragma once

// Objective comparison of generated arrangements against references, CSV
// reports and static SVG plots.

#include <filesystem>
#include <string>
#include <vector>

#include "a2s/chords.hpp"
#include "a2s/symbolic.hpp"

namespace a2s {

struct OnsetScore {
  double precision = 0.0;  // share of generated onsets found in the reference
  double recall = 0.0;     // share of reference onsets reproduced
  double f1 = 0.0;
};

// Binary onset series compared step by step; 1/1/1 when both are silent.
OnsetScore onset_f1(const FeatureSeries& generated, const FeatureSeries& reference);

// Pearson correlation; 1 for two identical constant series, 0 if only one is constant.
double pearson(const FeatureSeries& a, const FeatureSeries& b);

// Mean over beats of the cosine between the duration-weighted pitch-class
// histogram of the notes sounding in the beat and the chord's chroma. Beats
// where either side is empty score 0.
double chroma_similarity(const SegmentScore& score, const ChordProgression& chords);

// Pitch-class histogram of the whole segment, duration-weighted.
std::array<double, 12> pitch_class_histogram(const SegmentScore& score);
double cosine(std::span<const double> a, std::span<const double> b);

// Melody onsets of an arrangement come from its top voice. Every onset step
// has a highest note, so this is the step's any-onset indicator.
FeatureSeries top_voice_onsets(const SegmentScore& score);

struct SegmentMetrics {
  int start_beat = 0;
  double chroma_similarity = 0.0;
  OnsetScore bass_onset;
  OnsetScore melody_onset;
  double intensity_correlation = 0.0;
};

struct EvalReport {
  std::vector<SegmentMetrics> segments;
  SegmentMetrics mean;  // start_beat = -1

  std::string to_csv() const;
};

// When `reference_melody` is empty the reference's top voice stands in.
// LengthMismatch when segment counts differ.
EvalReport evaluate(const std::vector<SegmentScore>& generated, const std::vector<SegmentScore>& reference,
                    const std::vector<SegmentScore>& reference_melody, const std::vector<ChordProgression>& chords,
                    const std::vector<int>& start_beats);

struct Series {
  std::string label;
  std::vector<double> x, y;
};

// Minimal line chart.
std::string svg_line_plot(const std::string& title, const std::vector<Series>& series, const std::string& x_label);

// Plots every loss column of a training metrics CSV.
void write_loss_plot(const std::filesystem::path& metrics_csv, const std::filesystem::path& svg);

}  // namespace a2s
