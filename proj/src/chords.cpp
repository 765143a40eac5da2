#include "a2s/chords.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "a2s/error.hpp"

namespace a2s {

namespace {

// Harte et al. shorthand table, as interval degrees.
const std::map<std::string, std::vector<std::string>, std::less<>>& shorthands() {
  static const std::map<std::string, std::vector<std::string>, std::less<>> table = {
      {"maj", {"1", "3", "5"}},
      {"min", {"1", "b3", "5"}},
      {"dim", {"1", "b3", "b5"}},
      {"aug", {"1", "3", "#5"}},
      {"maj7", {"1", "3", "5", "7"}},
      {"min7", {"1", "b3", "5", "b7"}},
      {"7", {"1", "3", "5", "b7"}},
      {"dim7", {"1", "b3", "b5", "bb7"}},
      {"hdim7", {"1", "b3", "b5", "b7"}},
      {"minmaj7", {"1", "b3", "5", "7"}},
      {"maj6", {"1", "3", "5", "6"}},
      {"min6", {"1", "b3", "5", "6"}},
      {"9", {"1", "3", "5", "b7", "9"}},
      {"maj9", {"1", "3", "5", "7", "9"}},
      {"min9", {"1", "b3", "5", "b7", "9"}},
      {"11", {"1", "3", "5", "b7", "9", "11"}},
      {"min11", {"1", "b3", "5", "b7", "9", "11"}},
      {"13", {"1", "3", "5", "b7", "9", "11", "13"}},
      {"maj13", {"1", "3", "5", "7", "9", "11", "13"}},
      {"min13", {"1", "b3", "5", "b7", "9", "11", "13"}},
      {"sus2", {"1", "2", "5"}},
      {"sus4", {"1", "4", "5"}},
      {"5", {"1", "5"}},
      {"1", {"1"}},
  };
  return table;
}

[[noreturn]] void bad_label(std::string_view label, std::string_view why) {
  throw Error(ErrorCode::DataError, "bad chord label '" + std::string(label) + "': " + std::string(why));
}

int parse_root(std::string_view label, std::string_view s) {
  static constexpr int kNatural[] = {9, 11, 0, 2, 4, 5, 7};  // A..G
  if (s.empty() || s[0] < 'A' || s[0] > 'G') bad_label(label, "root must be A-G");
  int pc = kNatural[s[0] - 'A'];
  for (char c : s.substr(1)) {
    if (c == '#') ++pc;
    else if (c == 'b') --pc;
    else bad_label(label, "unexpected character in root");
  }
  return ((pc % 12) + 12) % 12;
}

// Semitone offset of an interval degree such as "b3", "#5", "9".
int parse_degree(std::string_view label, std::string_view s) {
  int shift = 0;
  std::size_t i = 0;
  while (i < s.size() && (s[i] == 'b' || s[i] == '#')) {
    shift += s[i] == '#' ? 1 : -1;
    ++i;
  }
  if (i == s.size()) bad_label(label, "missing degree");
  int degree = 0;
  for (; i < s.size(); ++i) {
    if (s[i] < '0' || s[i] > '9') bad_label(label, "degree must be numeric");
    degree = degree * 10 + (s[i] - '0');
  }
  static constexpr int kMajorScale[] = {0, 2, 4, 5, 7, 9, 11};
  if (degree < 1 || degree > 13) bad_label(label, "degree out of range");
  const int octave = (degree - 1) / 7;
  return kMajorScale[(degree - 1) % 7] + 12 * octave + shift;
}

}  // namespace

ChordFrame no_chord_frame() {
  ChordFrame f;
  f.root[0] = 1;
  f.bass[0] = 1;
  return f;
}

ChordFrame parse_chord_label(std::string_view label) {
  if (label == "N" || label == "X") return no_chord_frame();

  std::string_view rest = label;
  std::string_view bass_part;
  if (auto slash = rest.rfind('/'); slash != std::string_view::npos) {
    bass_part = rest.substr(slash + 1);
    rest = rest.substr(0, slash);
  }
  std::string_view ext_part;
  if (auto paren = rest.find('('); paren != std::string_view::npos) {
    if (rest.back() != ')') bad_label(label, "unbalanced parenthesis");
    ext_part = rest.substr(paren + 1, rest.size() - paren - 2);
    rest = rest.substr(0, paren);
  }
  std::string_view root_part = rest;
  std::string_view quality = "maj";
  if (auto colon = rest.find(':'); colon != std::string_view::npos) {
    root_part = rest.substr(0, colon);
    quality = rest.substr(colon + 1);
    if (quality.empty() && !ext_part.empty()) quality = "1";
  } else if (!ext_part.empty()) {
    quality = "1";
  }

  const int root = parse_root(label, root_part);
  std::vector<std::string> degrees;
  if (!quality.empty()) {
    auto it = shorthands().find(quality);
    if (it == shorthands().end()) bad_label(label, "unknown shorthand");
    degrees = it->second;
  }
  while (!ext_part.empty()) {
    auto comma = ext_part.find(',');
    std::string_view item = ext_part.substr(0, comma);
    ext_part = comma == std::string_view::npos ? std::string_view{} : ext_part.substr(comma + 1);
    if (item.empty()) continue;
    if (item[0] == '*') {
      std::string target(item.substr(1));
      degrees.erase(std::remove(degrees.begin(), degrees.end(), target), degrees.end());
    } else {
      degrees.emplace_back(item);
    }
  }

  ChordFrame frame;
  frame.root[root] = 1;
  for (const auto& d : degrees) frame.chroma[((root + parse_degree(label, d)) % 12 + 12) % 12] = 1;
  int bass = root;
  if (!bass_part.empty()) {
    bass = ((root + parse_degree(label, bass_part)) % 12 + 12) % 12;
    frame.chroma[bass] = 1;
  }
  frame.bass[bass] = 1;
  if (frame.is_no_chord()) frame.chroma[root] = 1;
  return frame;
}

ChordAnnotation::ChordAnnotation(std::vector<ChordSpan> spans) : spans_(std::move(spans)) {
  std::sort(spans_.begin(), spans_.end(), [](const auto& a, const auto& b) { return a.start_beat < b.start_beat; });
}

ChordAnnotation ChordAnnotation::parse(std::string_view text) {
  std::vector<ChordSpan> spans;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    ChordSpan span;
    if (!(fields >> span.start_beat >> span.end_beat >> span.label) || span.end_beat <= span.start_beat) {
      throw Error(ErrorCode::DataError, "chord annotation line " + std::to_string(line_no) + " is malformed");
    }
    parse_chord_label(span.label);  // validate early
    spans.push_back(std::move(span));
  }
  return ChordAnnotation(std::move(spans));
}

ChordAnnotation ChordAnnotation::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open chord annotation " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string ChordAnnotation::serialize() const {
  std::ostringstream out;
  for (const auto& s : spans_) out << s.start_beat << '\t' << s.end_beat << '\t' << s.label << '\n';
  return out.str();
}

ChordProgression ChordAnnotation::progression_at(int start_beat) const {
  ChordProgression prog;
  for (int i = 0; i < kBeatsPerSegment; ++i) {
    const double beat = start_beat + i + 1e-6;
    auto it = std::find_if(spans_.begin(), spans_.end(),
                           [&](const ChordSpan& s) { return s.start_beat <= beat && beat < s.end_beat; });
    if (it == spans_.end()) {
      throw Error(ErrorCode::AnnotationGap, "no chord covers beat " + std::to_string(start_beat + i));
    }
    prog.frames[i] = parse_chord_label(it->label);
  }
  return prog;
}

}  // namespace a2s
