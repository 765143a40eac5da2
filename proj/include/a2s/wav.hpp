#pragma once

#include <filesystem>
#include <vector>

namespace a2s {

struct Waveform {
  std::vector<double> samples;  // mono
  int sample_rate = 16000;

  double duration() const { return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0; }
};

// PCM 8/16/24/32-bit or IEEE float WAV; multichannel input is averaged to mono.
Waveform read_wav(const std::filesystem::path& path);

// 16-bit PCM mono.
void write_wav(const std::filesystem::path& path, const Waveform& wave);

// Band-limited (windowed-sinc) sample-rate conversion.
Waveform resample(const Waveform& in, int target_rate);

}  // namespace a2s
