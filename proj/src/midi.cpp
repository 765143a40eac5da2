#include "a2s/midi.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "a2s/error.hpp"
#include "a2s/io_util.hpp"

namespace a2s {

namespace {

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, std::size_t begin, std::size_t end)
      : bytes_(bytes), pos_(begin), end_(end) {}

  bool done() const { return pos_ >= end_; }
  std::size_t pos() const { return pos_; }

  std::uint8_t u8() {
    if (pos_ >= end_) throw Error(ErrorCode::DataError, "truncated MIDI data");
    return bytes_[pos_++];
  }
  std::uint32_t be(int n) {
    std::uint32_t v = 0;
    for (int i = 0; i < n; ++i) v = (v << 8) | u8();
    return v;
  }
  std::uint32_t varlen() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      const auto b = u8();
      v = (v << 7) | (b & 0x7f);
      if (!(b & 0x80)) return v;
    }
    throw Error(ErrorCode::DataError, "variable-length quantity too long");
  }
  void skip(std::size_t n) {
    if (pos_ + n > end_) throw Error(ErrorCode::DataError, "truncated MIDI data");
    pos_ += n;
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_;
  std::size_t end_;
};

void put_be(std::vector<std::uint8_t>& out, std::uint32_t v, int n) {
  for (int i = n - 1; i >= 0; --i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_varlen(std::vector<std::uint8_t>& out, std::uint32_t v) {
  std::uint8_t buf[5];
  int n = 0;
  buf[n++] = v & 0x7f;
  while (v >>= 7) buf[n++] = static_cast<std::uint8_t>((v & 0x7f) | 0x80);
  while (n) out.push_back(buf[--n]);
}

}  // namespace

MidiFile parse_midi(const std::vector<std::uint8_t>& bytes) {
  Reader hdr(bytes, 0, bytes.size());
  if (hdr.be(4) != 0x4d546864) throw Error(ErrorCode::DataError, "missing MThd header");
  const auto hlen = hdr.be(4);
  const auto format = hdr.be(2);
  const auto ntracks = hdr.be(2);
  const auto division = hdr.be(2);
  if (hlen > 6) hdr.skip(hlen - 6);
  if (format > 1) throw Error(ErrorCode::DataError, "only MIDI file types 0 and 1 are supported");
  if (division & 0x8000) throw Error(ErrorCode::DataError, "SMPTE time division is not supported");

  MidiFile file;
  file.ticks_per_quarter = static_cast<int>(division);
  std::size_t pos = hdr.pos();
  for (std::uint32_t track = 0; track < ntracks; ++track) {
    Reader chunk(bytes, pos, bytes.size());
    const auto id = chunk.be(4);
    const auto len = chunk.be(4);
    const std::size_t begin = chunk.pos();
    if (begin + len > bytes.size()) throw Error(ErrorCode::DataError, "truncated MIDI track");
    pos = begin + len;
    if (id != 0x4d54726b) continue;  // unknown chunk

    Reader r(bytes, begin, begin + len);
    std::int64_t tick = 0;
    std::uint8_t status = 0;
    std::map<std::pair<int, int>, std::vector<std::pair<std::int64_t, int>>> open;
    while (!r.done()) {
      tick += r.varlen();
      std::uint8_t b = r.u8();
      if (b == 0xff) {
        const auto type = r.u8();
        const auto mlen = r.varlen();
        r.skip(mlen);
        file.end_tick = std::max(file.end_tick, tick);
        if (type == 0x2f) break;
        continue;
      }
      if (b == 0xf0 || b == 0xf7) {
        r.skip(r.varlen());
        continue;
      }
      std::uint8_t d1;
      if (b & 0x80) {
        status = b;
        d1 = r.u8();
      } else {
        if (!status) throw Error(ErrorCode::DataError, "running status without prior status byte");
        d1 = b;
      }
      const int kind = status & 0xf0;
      const int channel = status & 0x0f;
      if (kind == 0xc0 || kind == 0xd0) {
        file.end_tick = std::max(file.end_tick, tick);
        continue;
      }
      const std::uint8_t d2 = r.u8();
      file.end_tick = std::max(file.end_tick, tick);
      if (kind == 0x90 && d2 > 0) {
        open[{channel, d1}].push_back({tick, d2});
      } else if (kind == 0x80 || (kind == 0x90 && d2 == 0)) {
        auto& stack = open[{channel, d1}];
        if (stack.empty()) continue;
        const auto [start, vel] = stack.front();
        stack.erase(stack.begin());
        file.notes.push_back({start, tick, d1, vel, channel});
      }
    }
    for (auto& [key, stack] : open) {
      for (auto [start, vel] : stack) file.notes.push_back({start, tick, key.second, vel, key.first});
    }
  }
  std::stable_sort(file.notes.begin(), file.notes.end(), [](const MidiNote& a, const MidiNote& b) {
    return a.start_tick != b.start_tick ? a.start_tick < b.start_tick : a.pitch < b.pitch;
  });
  return file;
}

MidiFile read_midi(const std::filesystem::path& path) { return parse_midi(read_file_bytes(path)); }

SegmentScore MidiFile::segment(int start_beat) const {
  const double tpq = ticks_per_quarter;
  std::vector<NoteEvent> out;
  for (const auto& n : notes) {
    const double onset_beats = n.start_tick / tpq - start_beat;
    const int step = static_cast<int>(std::lround(onset_beats * kStepsPerBeat));
    if (step < 0 || step >= kSegmentSteps) continue;
    const double dur_beats = (n.end_tick - n.start_tick) / tpq;
    const int dur = std::max(1, static_cast<int>(std::lround(dur_beats * kStepsPerBeat)));
    out.push_back({step, n.pitch, dur});
  }
  return SegmentScore::from_notes(std::move(out));
}

void append_segment(std::vector<GridNote>& out, const SegmentScore& seg, int start_beat) {
  for (const auto& n : seg.notes()) {
    out.push_back({static_cast<std::int64_t>(start_beat) * kStepsPerBeat + n.onset_step, n.pitch, n.duration_steps});
  }
}

std::vector<std::uint8_t> encode_midi(const std::vector<GridNote>& notes, int total_beats) {
  constexpr int kTicksPerStep = kOutputTicksPerQuarter / kStepsPerBeat;
  struct Event {
    std::int64_t tick;
    int order;  // note-offs sort before note-ons at the same tick
    std::uint8_t status, d1, d2;
  };
  std::vector<Event> events;
  std::int64_t last = static_cast<std::int64_t>(total_beats) * kOutputTicksPerQuarter;
  for (const auto& n : notes) {
    const std::int64_t on = n.onset_step * kTicksPerStep;
    const std::int64_t off = (n.onset_step + n.duration_steps) * kTicksPerStep;
    events.push_back({on, 1, 0x90, static_cast<std::uint8_t>(n.pitch), kOutputVelocity});
    events.push_back({off, 0, 0x80, static_cast<std::uint8_t>(n.pitch), 0});
    last = std::max(last, off);
  }
  std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    return a.tick != b.tick ? a.tick < b.tick : a.order < b.order;
  });

  std::vector<std::uint8_t> track;
  const auto tempo = static_cast<std::uint32_t>(std::lround(60'000'000.0 / kOutputBpm));
  put_varlen(track, 0);
  track.insert(track.end(), {0xff, 0x51, 0x03});
  put_be(track, tempo, 3);
  put_varlen(track, 0);
  track.insert(track.end(), {0xff, 0x58, 0x04, 0x04, 0x02, 0x18, 0x08});
  put_varlen(track, 0);
  track.insert(track.end(), {0xc0, 0x00});  // acoustic grand piano
  std::int64_t tick = 0;
  for (const auto& e : events) {
    put_varlen(track, static_cast<std::uint32_t>(e.tick - tick));
    tick = e.tick;
    track.insert(track.end(), {e.status, e.d1, e.d2});
  }
  put_varlen(track, static_cast<std::uint32_t>(last - tick));
  track.insert(track.end(), {0xff, 0x2f, 0x00});

  std::vector<std::uint8_t> out;
  put_be(out, 0x4d546864, 4);
  put_be(out, 6, 4);
  put_be(out, 0, 2);
  put_be(out, 1, 2);
  put_be(out, kOutputTicksPerQuarter, 2);
  put_be(out, 0x4d54726b, 4);
  put_be(out, static_cast<std::uint32_t>(track.size()), 4);
  out.insert(out.end(), track.begin(), track.end());
  return out;
}

void write_midi(const std::filesystem::path& path, const std::vector<GridNote>& notes, int total_beats) {
  write_file_atomic(path, encode_midi(notes, total_beats));
}

}  // namespace a2s
