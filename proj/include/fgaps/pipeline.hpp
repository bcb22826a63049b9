#pragma once

// Command implementations behind the `fgaps` CLI. Each writes its artifacts
// into `out`, embeds the resolved config and input digests, and returns the
// summary it wrote.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "fgaps/boundlab.hpp"
#include "fgaps/directions.hpp"
#include "fgaps/scoring.hpp"

namespace fgaps::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

struct ExtractOptions {
  fs::path manifest;
  fs::path out;
  std::vector<Feature> features{kAllFeatures.begin(), kAllFeatures.end()};
  std::string split;  // empty = all samples
  bool center = true;
};
json extract_directions(const ExtractOptions& opts);

struct SelectOptions {
  fs::path manifest;
  fs::path out;  // must hold extract_summary.json
  std::vector<Feature> features{kAllFeatures.begin(), kAllFeatures.end()};
  std::string split;
};
json select_layers(const SelectOptions& opts);

struct TrainOptions {
  fs::path manifest;
  fs::path out;  // must hold layer_selection.json
  std::string split;
  TrainConfig train;
};
json train(const TrainOptions& opts);

struct ScoreOptions {
  fs::path model;
  fs::path manifest;
  fs::path out;
  std::string split;
};
json score(const ScoreOptions& opts);

struct EvaluateOptions {
  fs::path scores;
  fs::path manifest;
  fs::path out;
  std::string column = "u";
  bool negate = false;  // treat the column as a confidence
  bool plot = false;
  std::string split;
};
json evaluate(const EvaluateOptions& opts);

struct BoundOptions {
  boundlab::BoundSuiteConfig suite;
  fs::path out;
};
// Writes the report, then throws ViolationFound if any invariant failed.
json verify_bound(const BoundOptions& opts);

struct StrategyResult {
  Strategy strategy = Strategy::feature_gaps;
  std::array<LayerScoreTable, 3> tables;
  EnsembleModel model;
  double train_prr = 0.0;
  double eval_prr = 0.0;
  double eval_auroc = 0.0;
};

// In-memory select/train/evaluate with directions from the given strategy.
StrategyResult run_strategy(const DatasetManifest& train_set, const DatasetManifest& eval_set, Strategy strategy,
                            std::uint64_t seed, const TrainConfig& cfg, const PcaOptions& pca = {});

struct AblationOptions {
  fs::path manifest;
  fs::path eval_manifest;
  fs::path out;
  std::string strategy = "all";  // a strategy name or "all"
  std::uint64_t seed = 0;
  TrainConfig train;
  std::string split;
  std::string eval_split;
  std::size_t train_limit = 0;  // 0 = use every training sample
  bool center = true;
};
json ablation(const AblationOptions& opts);

// Re-checks every artifact's recorded input/output digests under `dir`.
// Returns the report; throws DigestMismatch when any check fails.
json verify_artifacts(const fs::path& dir);

// Seed for the random-direction ablation at one (feature, layer).
std::uint64_t direction_seed(std::uint64_t seed, Feature feature, int layer);

}  // namespace fgaps::pipeline
