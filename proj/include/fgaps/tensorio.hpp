#pragma once

// Named-tensor container:
//   [u64 little-endian header length][UTF-8 JSON header][packed f32 LE payload]
// The header maps tensor name -> {"data_offsets":[begin,end],"dtype":"F32","shape":[...]}
// with keys sorted and no whitespace; offsets are relative to the payload start.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fgaps {

struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<float> data;  // row-major

  std::size_t numel() const;

  static Tensor from_matrix(const Eigen::MatrixXd& m);
  static Tensor from_vector(const Eigen::VectorXd& v);
  Eigen::MatrixXd to_matrix() const;  // requires rank 2
  Eigen::VectorXd to_vector() const;  // flattens any rank

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

using TensorMap = std::map<std::string, Tensor>;

struct TensorFile {
  TensorMap tensors;
};

TensorFile parse_tensor_bytes(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_tensors(const TensorMap& tensors);

TensorFile read_tensor_file(const std::filesystem::path& path);
void write_tensor_file(const TensorMap& tensors, const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace fgaps
