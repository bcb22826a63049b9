#include "fgaps/tensorio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "fgaps/errors.hpp"

namespace fgaps {
namespace {

using json = nlohmann::json;

std::uint64_t load_u64_le(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void store_u64_le(std::uint64_t v, std::vector<std::uint8_t>& out) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

float load_f32_le(const std::uint8_t* p) {
  std::uint32_t bits = 0;
  for (int i = 3; i >= 0; --i) bits = (bits << 8) | p[i];
  return std::bit_cast<float>(bits);
}

void store_f32_le(float f, std::uint8_t* p) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) p[i] = static_cast<std::uint8_t>(bits >> (8 * i));
}

float narrow(double x, const char* what) {
  if (!std::isfinite(x) || std::abs(x) > std::numeric_limits<float>::max()) {
    throw Error(Errc::NonFiniteValue, std::string(what) + " holds a value not representable as f32");
  }
  return static_cast<float>(x);
}

std::uint64_t checked_numel(const std::vector<std::int64_t>& shape, const std::string& name) {
  std::uint64_t n = 1;
  for (auto s : shape) {
    if (s < 0) throw Error(Errc::MalformedHeader, "tensor '" + name + "' has a negative dimension");
    if (s != 0 && n > std::numeric_limits<std::uint64_t>::max() / 4 / static_cast<std::uint64_t>(s)) {
      throw Error(Errc::MalformedHeader, "tensor '" + name + "' shape overflows");
    }
    n *= static_cast<std::uint64_t>(s);
  }
  return n;
}

}  // namespace

std::size_t Tensor::numel() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, std::int64_t b) { return a * static_cast<std::size_t>(b); });
}

Tensor Tensor::from_matrix(const Eigen::MatrixXd& m) {
  Tensor t;
  t.shape = {m.rows(), m.cols()};
  t.data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) t.data.push_back(narrow(m(r, c), "matrix"));
  return t;
}

Tensor Tensor::from_vector(const Eigen::VectorXd& v) {
  Tensor t;
  t.shape = {v.size()};
  t.data.reserve(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) t.data.push_back(narrow(v(i), "vector"));
  return t;
}

Eigen::MatrixXd Tensor::to_matrix() const {
  if (shape.size() != 2) throw Error(Errc::ShapeMismatch, "expected a rank-2 tensor");
  Eigen::MatrixXd m(shape[0], shape[1]);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = data[k++];
  return m;
}

Eigen::VectorXd Tensor::to_vector() const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) v(static_cast<Eigen::Index>(i)) = data[i];
  return v;
}

TensorFile parse_tensor_bytes(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw Error(Errc::MalformedHeader, "file shorter than the 8-byte length prefix");
  const std::uint64_t header_len = load_u64_le(bytes.data());
  if (header_len > bytes.size() - 8) {
    throw Error(Errc::MalformedHeader, "header length exceeds file size");
  }
  const auto header_begin = reinterpret_cast<const char*>(bytes.data() + 8);
  json header;
  try {
    header = json::parse(header_begin, header_begin + header_len);
  } catch (const json::exception& e) {
    throw Error(Errc::MalformedHeader, std::string("header is not valid JSON: ") + e.what());
  }
  if (!header.is_object()) throw Error(Errc::MalformedHeader, "header is not a JSON object");

  const std::span<const std::uint8_t> payload = bytes.subspan(8 + header_len);
  struct Region {
    std::uint64_t begin, end;
    std::string name;
  };
  std::vector<Region> regions;
  TensorFile out;

  for (const auto& [name, entry] : header.items()) {
    if (!entry.is_object() || !entry.contains("dtype") || !entry.contains("shape") ||
        !entry.contains("data_offsets")) {
      throw Error(Errc::MalformedHeader, "tensor '" + name + "' lacks dtype/shape/data_offsets");
    }
    const auto& dtype = entry["dtype"];
    if (!dtype.is_string()) throw Error(Errc::MalformedHeader, "tensor '" + name + "' dtype is not a string");
    if (dtype.get<std::string>() != "F32") {
      throw Error(Errc::UnsupportedDtype, "tensor '" + name + "' has dtype " + dtype.get<std::string>());
    }
    Tensor t;
    const auto& offsets = entry["data_offsets"];
    try {
      t.shape = entry["shape"].get<std::vector<std::int64_t>>();
      if (!offsets.is_array() || offsets.size() != 2) throw std::invalid_argument("offsets");
      regions.push_back({offsets[0].get<std::uint64_t>(), offsets[1].get<std::uint64_t>(), name});
    } catch (const std::exception&) {
      throw Error(Errc::MalformedHeader, "tensor '" + name + "' has malformed shape or data_offsets");
    }
    const Region& r = regions.back();
    if (r.end < r.begin) throw Error(Errc::MalformedHeader, "tensor '" + name + "' has end < begin");
    if (r.end > payload.size()) {
      throw Error(Errc::OffsetOutOfBounds, "tensor '" + name + "' ends at " + std::to_string(r.end) +
                                               " but payload has " + std::to_string(payload.size()) + " bytes");
    }
    const std::uint64_t n = checked_numel(t.shape, name);
    if (r.end - r.begin != 4 * n) {
      throw Error(Errc::MalformedHeader, "tensor '" + name + "' byte span does not match its shape");
    }
    t.data.resize(n);
    for (std::uint64_t i = 0; i < n; ++i) {
      t.data[i] = load_f32_le(payload.data() + r.begin + 4 * i);
    }
    out.tensors.emplace(name, std::move(t));
  }

  std::sort(regions.begin(), regions.end(),
            [](const Region& a, const Region& b) { return a.begin < b.begin || (a.begin == b.begin && a.end < b.end); });
  for (std::size_t i = 1; i < regions.size(); ++i) {
    if (regions[i].begin < regions[i - 1].end) {
      throw Error(Errc::OffsetOutOfBounds,
                  "tensor '" + regions[i].name + "' overlaps tensor '" + regions[i - 1].name + "'");
    }
  }
  return out;
}

std::vector<std::uint8_t> serialize_tensors(const TensorMap& tensors) {
  json header = json::object();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    const std::uint64_t n = checked_numel(t.shape, name);
    if (n != t.data.size()) {
      throw Error(Errc::ShapeMismatch, "tensor '" + name + "' data length does not match its shape");
    }
    for (float f : t.data) {
      if (!std::isfinite(f)) throw Error(Errc::NonFiniteValue, "tensor '" + name + "' contains a non-finite value");
    }
    header[name] = {{"dtype", "F32"}, {"shape", t.shape}, {"data_offsets", {offset, offset + 4 * n}}};
    offset += 4 * n;
  }
  // std::map-backed json objects serialize keys in lexicographic order.
  const std::string text = header.dump();

  std::vector<std::uint8_t> out;
  out.reserve(8 + text.size() + offset);
  store_u64_le(text.size(), out);
  out.insert(out.end(), text.begin(), text.end());
  const std::size_t payload_start = out.size();
  out.resize(payload_start + offset);
  std::size_t pos = payload_start;
  for (const auto& [name, t] : tensors) {
    for (float f : t.data) {
      store_f32_le(f, out.data() + pos);
      pos += 4;
    }
  }
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoFailure, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoFailure, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::IoFailure, "short write to " + path.string());
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  write_file_bytes(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return parse_tensor_bytes(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.filename().string() + ": " + e.detail());
  }
}

void write_tensor_file(const TensorMap& tensors, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_tensors(tensors));
}

}  // namespace fgaps
