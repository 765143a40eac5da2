#include "a2s/tensor_file.hpp"

#include <cstring>

#include "a2s/error.hpp"
#include "a2s/io_util.hpp"

namespace a2s {

const Mat* TensorFile::find(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t.value;
  }
  return nullptr;
}

std::vector<std::uint8_t> encode_tensor_file(std::string_view magic, const TensorFile& file) {
  if (magic.size() != 8) throw Error(ErrorCode::ContractViolation, "container magic must be 8 bytes");
  nlohmann::json header;
  header["meta"] = file.meta;
  header["tensors"] = nlohmann::json::array();
  for (const auto& t : file.tensors) {
    header["tensors"].push_back({{"name", t.name}, {"rows", t.value.rows()}, {"cols", t.value.cols()}});
  }
  const std::string text = header.dump();
  std::vector<std::uint8_t> out(magic.begin(), magic.end());
  const std::uint64_t len = text.size();
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((len >> (8 * i)) & 0xff));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& t : file.tensors) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(t.value.data());
    out.insert(out.end(), p, p + t.value.size() * sizeof(double));
  }
  return out;
}

TensorFile decode_tensor_file(const std::vector<std::uint8_t>& bytes, std::string_view magic) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), magic.data(), 8) != 0) {
    throw Error(ErrorCode::DataError, "bad container magic (expected " + std::string(magic) + ")");
  }
  std::uint64_t len = 0;
  for (int i = 7; i >= 0; --i) len = (len << 8) | bytes[8 + i];
  if (16 + len > bytes.size()) throw Error(ErrorCode::DataError, "truncated container header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::DataError, std::string("container header: ") + e.what());
  }
  TensorFile file;
  file.meta = header.value("meta", nlohmann::json::object());
  std::size_t pos = 16 + len;
  for (const auto& entry : header.at("tensors")) {
    const auto rows = entry.at("rows").get<Eigen::Index>();
    const auto cols = entry.at("cols").get<Eigen::Index>();
    const std::size_t n = static_cast<std::size_t>(rows * cols) * sizeof(double);
    if (pos + n > bytes.size()) throw Error(ErrorCode::DataError, "truncated container payload");
    Mat m(rows, cols);
    std::memcpy(m.data(), bytes.data() + pos, n);
    pos += n;
    file.tensors.push_back({entry.at("name").get<std::string>(), std::move(m)});
  }
  return file;
}

void save_tensor_file(const std::filesystem::path& path, std::string_view magic, const TensorFile& file) {
  write_file_atomic(path, encode_tensor_file(magic, file));
}

TensorFile load_tensor_file(const std::filesystem::path& path, std::string_view magic) {
  return decode_tensor_file(read_file_bytes(path), magic);
}

}  // namespace a2s
