#pragma once

// Binary tensor container: 8-byte magic, little-endian u64 header length, a
// JSON header (free-form `meta` plus a `tensors` index), then raw row-major
// float64 payloads in index order.

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace a2s {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct NamedTensor {
  std::string name;
  Mat value;
};

struct TensorFile {
  nlohmann::json meta;
  std::vector<NamedTensor> tensors;

  const Mat* find(std::string_view name) const;
};

std::vector<std::uint8_t> encode_tensor_file(std::string_view magic, const TensorFile& file);
TensorFile decode_tensor_file(const std::vector<std::uint8_t>& bytes, std::string_view magic);

void save_tensor_file(const std::filesystem::path& path, std::string_view magic, const TensorFile& file);
TensorFile load_tensor_file(const std::filesystem::path& path, std::string_view magic);

}  // namespace a2s
