#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include <Eigen/Dense>

#include "fgaps/manifest.hpp"

namespace fgaps::testing {

namespace fs = std::filesystem;

class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag)
      : path_(fs::temp_directory_path() / ("fgaps_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

inline Eigen::MatrixXd gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

// Values exactly representable in f32, so bundles survive the disk round trip.
inline Eigen::MatrixXd gaussian_f32(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  return gaussian(rng, rows, cols).cast<float>().cast<double>();
}

inline ActivationBundle make_bundle(const Eigen::MatrixXd& h, Variant v) {
  ActivationBundle b;
  b.hidden_mean = h;
  b.variant = v;
  b.answer_token_count = 2;
  return b;
}

// T samples with all seven variants filled with seeded Gaussian states; labels alternate 1, 0.
inline DatasetManifest random_manifest(int samples, int layers, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  DatasetManifest m;
  m.meta = {layers, dim, "test"};
  for (int i = 0; i < samples; ++i) {
    Sample s;
    s.id = "sample-" + std::to_string(i);
    s.correct = i % 2 == 0 ? 1 : 0;
    s.split = "train";
    for (Variant v : kAllVariants) s.bundles.emplace(v, make_bundle(gaussian_f32(rng, layers + 1, dim), v));
    m.samples.push_back(std::move(s));
  }
  return m;
}

}  // namespace fgaps::testing
