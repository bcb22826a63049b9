#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "fgaps/linalg.hpp"
#include "fgaps/manifest.hpp"

namespace fgaps {

enum class Feature { honesty, context_reliance, context_comprehension };

inline constexpr std::array<Feature, 3> kAllFeatures = {Feature::honesty, Feature::context_reliance,
                                                        Feature::context_comprehension};

std::string_view feature_name(Feature f) noexcept;
Feature parse_feature(std::string_view name);
Variant positive_variant(Feature f) noexcept;
Variant negative_variant(Feature f) noexcept;

// feature_gaps is the contrastive PCA; the rest are the ablation baselines.
enum class Strategy { feature_gaps, random, positive_pca, negative_pca, all_pca, mean_diff };

inline constexpr std::array<Strategy, 6> kAllStrategies = {Strategy::feature_gaps, Strategy::random,
                                                           Strategy::positive_pca, Strategy::negative_pca,
                                                           Strategy::all_pca,      Strategy::mean_diff};

std::string_view strategy_name(Strategy s) noexcept;
Strategy parse_strategy(std::string_view name);

inline constexpr std::string_view kSignPosMinusNeg = "pos-minus-neg projects non-negative on average";

struct DifferenceMatrix {
  Eigen::MatrixXd rows;  // T x d, row i = h_pos[layer] - h_neg[layer] of sample i
  int layer = 0;
  Feature feature = Feature::honesty;
};

struct FeatureDirection {
  Eigen::VectorXd v;  // unit norm
  int layer = 0;
  Feature feature = Feature::honesty;
  Strategy strategy = Strategy::feature_gaps;
  std::string sign_convention{kSignPosMinusNeg};
  std::string manifest_digest;
};

struct PcaOptions {
  bool center = true;
  linalg::PowerOptions power;
  // Top-two eigen-gap below this fraction of the top eigenvalue is reported as NoConvergence.
  double min_relative_gap = 1e-9;
};

DifferenceMatrix build_difference_matrix(const DatasetManifest& manifest, Feature feature, int layer);

/// Top principal direction of `rows`, sign-fixed so the mean of the uncentered
/// rows projects non-negatively (exact zero: largest-magnitude entry positive).
Eigen::VectorXd principal_direction(const Eigen::MatrixXd& rows, const PcaOptions& opts = {});

FeatureDirection extract_direction_pca(const DifferenceMatrix& m, const PcaOptions& opts = {});

FeatureDirection extract_direction_ablation(const DatasetManifest& manifest, Feature feature, int layer,
                                            Strategy strategy, std::uint64_t seed,
                                            const PcaOptions& opts = {});

// Direction artifact: tensor file holding "direction" [d], plus a JSON sidecar
// next to it (same stem, .json extension).
void write_direction(const FeatureDirection& dir, const std::filesystem::path& tensor_path);
FeatureDirection read_direction(const std::filesystem::path& tensor_path);
std::filesystem::path direction_sidecar_path(const std::filesystem::path& tensor_path);

}  // namespace fgaps
