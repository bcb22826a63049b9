#pragma once

#include <cstdint>
#include <filesystem>

#include <Eigen/Dense>

#include "fgaps/manifest.hpp"

namespace fgaps::synthetic {

// Planted-signal benchmark. A unit direction u is added at `planted_layer` to
// every feature's positive-variant state with a per-sample strength, and the
// standard state carries +-signal along u depending on correctness. A second
// "decoy" direction is planted in the positive variants at `decoy_layer` with
// no link to correctness.
struct PlantedConfig {
  int train_samples = 256;
  int eval_samples = 256;
  int num_layers = 8;
  int hidden_dim = 32;
  int planted_layer = 5;
  int decoy_layer = 7;  // -1 disables the decoy
  double noise = 0.5;
  double signal = 0.6;
  double contrast_mean = 2.0;
  double contrast_std = 1.5;
  double correct_rate = 0.5;
  bool with_logprobs = true;
  std::uint64_t seed = 7;
};

struct PlantedDataset {
  std::filesystem::path train_manifest;
  std::filesystem::path eval_manifest;
  Eigen::VectorXd planted_direction;
  Eigen::VectorXd decoy_direction;
};

PlantedDataset generate_planted(const PlantedConfig& cfg, const std::filesystem::path& out_dir);

/// Writes every in-memory bundle under <manifest dir>/bundles/<id>/<variant>.tensors,
/// points the samples at them, and writes the manifest JSON.
void save_dataset(DatasetManifest& manifest, const std::filesystem::path& manifest_path);

}  // namespace fgaps::synthetic
