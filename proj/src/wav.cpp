#include "a2s/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>

#include "a2s/error.hpp"
#include "a2s/io_util.hpp"

namespace a2s {

namespace {

std::uint32_t le(const std::vector<std::uint8_t>& b, std::size_t pos, int n) {
  if (pos + n > b.size()) throw Error(ErrorCode::DataError, "truncated WAV file");
  std::uint32_t v = 0;
  for (int i = n - 1; i >= 0; --i) v = (v << 8) | b[pos + i];
  return v;
}

void put_le(std::vector<std::uint8_t>& out, std::uint32_t v, int n) {
  for (int i = 0; i < n; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  const auto b = read_file_bytes(path);
  if (b.size() < 12 || std::memcmp(b.data(), "RIFF", 4) != 0 || std::memcmp(b.data() + 8, "WAVE", 4) != 0) {
    throw Error(ErrorCode::DataError, path.string() + " is not a RIFF/WAVE file");
  }
  int format = 0, channels = 0, bits = 0, rate = 0;
  std::size_t data_pos = 0, data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= b.size()) {
    const std::size_t len = le(b, pos + 4, 4);
    if (std::memcmp(b.data() + pos, "fmt ", 4) == 0) {
      format = static_cast<int>(le(b, pos + 8, 2));
      channels = static_cast<int>(le(b, pos + 10, 2));
      rate = static_cast<int>(le(b, pos + 12, 4));
      bits = static_cast<int>(le(b, pos + 22, 2));
      if (format == 0xfffe && len >= 26) format = static_cast<int>(le(b, pos + 32, 2));
    } else if (std::memcmp(b.data() + pos, "data", 4) == 0) {
      data_pos = pos + 8;
      data_len = std::min(len, b.size() - data_pos);
    }
    pos += 8 + len + (len & 1);
  }
  if (!channels || !rate || !data_pos) throw Error(ErrorCode::DataError, path.string() + ": missing fmt or data chunk");
  if (!(format == 1 && (bits == 8 || bits == 16 || bits == 24 || bits == 32)) && !(format == 3 && (bits == 32 || bits == 64))) {
    throw Error(ErrorCode::DataError, path.string() + ": unsupported WAV encoding");
  }
  const int bytes_per = bits / 8;
  const std::size_t frames = data_len / (bytes_per * channels);
  Waveform w;
  w.sample_rate = rate;
  w.samples.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      const std::size_t p = data_pos + (f * channels + c) * bytes_per;
      double v = 0.0;
      if (format == 3 && bits == 32) {
        std::uint32_t raw = le(b, p, 4);
        float fv;
        std::memcpy(&fv, &raw, 4);
        v = fv;
      } else if (format == 3) {
        std::uint64_t raw = le(b, p, 4) | (static_cast<std::uint64_t>(le(b, p + 4, 4)) << 32);
        std::memcpy(&v, &raw, 8);
      } else if (bits == 8) {
        v = (static_cast<int>(b[p]) - 128) / 128.0;
      } else {
        std::uint32_t raw = le(b, p, bytes_per);
        const int shift = 32 - bits;
        const auto sv = static_cast<std::int32_t>(raw << shift) >> shift;
        v = sv / std::ldexp(1.0, bits - 1);
      }
      acc += v;
    }
    w.samples[f] = acc / channels;
  }
  return w;
}

void write_wav(const std::filesystem::path& path, const Waveform& wave) {
  std::vector<std::uint8_t> out;
  const auto data_len = static_cast<std::uint32_t>(wave.samples.size() * 2);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_le(out, 36 + data_len, 4);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_le(out, 16, 4);
  put_le(out, 1, 2);
  put_le(out, 1, 2);
  put_le(out, static_cast<std::uint32_t>(wave.sample_rate), 4);
  put_le(out, static_cast<std::uint32_t>(wave.sample_rate * 2), 4);
  put_le(out, 2, 2);
  put_le(out, 16, 2);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_le(out, data_len, 4);
  for (double s : wave.samples) {
    const auto v = static_cast<std::int16_t>(std::lround(std::clamp(s, -1.0, 1.0) * 32767.0));
    put_le(out, static_cast<std::uint16_t>(v), 2);
  }
  write_file_atomic(path, out);
}

Waveform resample(const Waveform& in, int target_rate) {
  if (in.sample_rate == target_rate) return in;
  constexpr int kZeroCrossings = 16;
  const double ratio = static_cast<double>(target_rate) / in.sample_rate;
  const double cutoff = std::min(1.0, ratio) * 0.97;
  const double half_width = kZeroCrossings / cutoff;
  const auto n_out = static_cast<std::size_t>(std::llround(in.samples.size() * ratio));
  const auto n_in = static_cast<std::ptrdiff_t>(in.samples.size());
  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(n_out);
  for (std::size_t n = 0; n < n_out; ++n) {
    const double t = n / ratio;
    const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(std::ceil(t - half_width)));
    const auto hi = std::min<std::ptrdiff_t>(n_in - 1, static_cast<std::ptrdiff_t>(std::floor(t + half_width)));
    double acc = 0.0;
    for (auto k = lo; k <= hi; ++k) {
      const double d = t - k;
      const double win = 0.5 + 0.5 * std::cos(std::numbers::pi * d / half_width);
      acc += in.samples[k] * cutoff * sinc(cutoff * d) * win;
    }
    out.samples[n] = acc;
  }
  return out;
}

}  // namespace a2s
