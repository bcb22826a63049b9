#include "fgaps/directions.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "fgaps/errors.hpp"
#include "fgaps/tensorio.hpp"

namespace fgaps {
namespace {

using json = nlohmann::json;

void check_layer(const DatasetManifest& manifest, int layer) {
  if (layer < 0 || layer > manifest.meta.num_layers) {
    throw Error(Errc::LayerOutOfRange,
                "layer " + std::to_string(layer) + " outside 0.." + std::to_string(manifest.meta.num_layers));
  }
}

Eigen::MatrixXd stack_layer(const DatasetManifest& manifest, Variant variant, int layer) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(manifest.samples.size()), manifest.meta.hidden_dim);
  for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = manifest.samples[i].bundle(variant).hidden_mean.row(layer);
  }
  return out;
}

// Deterministic fallback when the mean projection is exactly zero.
void fix_sign_by_largest_entry(Eigen::VectorXd& v) {
  Eigen::Index idx = 0;
  v.cwiseAbs().maxCoeff(&idx);
  if (v(idx) < 0) v = -v;
}

}  // namespace

std::string_view feature_name(Feature f) noexcept {
  switch (f) {
    case Feature::honesty: return "honesty";
    case Feature::context_reliance: return "context_reliance";
    case Feature::context_comprehension: return "context_comprehension";
  }
  return "honesty";
}

Feature parse_feature(std::string_view name) {
  for (Feature f : kAllFeatures)
    if (feature_name(f) == name) return f;
  throw Error(Errc::InvalidArgument, "unknown feature '" + std::string(name) + "'");
}

Variant positive_variant(Feature f) noexcept {
  switch (f) {
    case Feature::honesty: return Variant::honesty_pos;
    case Feature::context_reliance: return Variant::reliance_pos;
    case Feature::context_comprehension: return Variant::comprehension_pos;
  }
  return Variant::honesty_pos;
}

Variant negative_variant(Feature f) noexcept {
  switch (f) {
    case Feature::honesty: return Variant::honesty_neg;
    case Feature::context_reliance: return Variant::reliance_neg;
    case Feature::context_comprehension: return Variant::comprehension_neg;
  }
  return Variant::honesty_neg;
}

std::string_view strategy_name(Strategy s) noexcept {
  switch (s) {
    case Strategy::feature_gaps: return "feature_gaps";
    case Strategy::random: return "random";
    case Strategy::positive_pca: return "positive_pca";
    case Strategy::negative_pca: return "negative_pca";
    case Strategy::all_pca: return "all_pca";
    case Strategy::mean_diff: return "mean_diff";
  }
  return "feature_gaps";
}

Strategy parse_strategy(std::string_view name) {
  for (Strategy s : kAllStrategies)
    if (strategy_name(s) == name) return s;
  throw Error(Errc::InvalidArgument, "unknown strategy '" + std::string(name) + "'");
}

DifferenceMatrix build_difference_matrix(const DatasetManifest& manifest, Feature feature, int layer) {
  check_layer(manifest, layer);
  const Variant pos = positive_variant(feature);
  const Variant neg = negative_variant(feature);
  DifferenceMatrix m;
  m.layer = layer;
  m.feature = feature;
  m.rows.resize(static_cast<Eigen::Index>(manifest.samples.size()), manifest.meta.hidden_dim);
  for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
    const Sample& s = manifest.samples[i];
    m.rows.row(static_cast<Eigen::Index>(i)) =
        s.bundle(pos).hidden_mean.row(layer) - s.bundle(neg).hidden_mean.row(layer);
  }
  return m;
}

Eigen::VectorXd principal_direction(const Eigen::MatrixXd& rows, const PcaOptions& opts) {
  if (rows.rows() < 2) throw Error(Errc::DegenerateMatrix, "need at least two rows");
  if (!rows.allFinite()) throw Error(Errc::NonFiniteValue, "rows contain non-finite values");

  const Eigen::RowVectorXd mean = rows.colwise().mean();
  Eigen::MatrixXd x = rows;
  if (opts.center) x.rowwise() -= mean;

  const double scale = std::max(1.0, rows.cwiseAbs().maxCoeff());
  if (x.cwiseAbs().maxCoeff() <= 1e-12 * scale) {
    throw Error(Errc::DegenerateMatrix, opts.center ? "centered matrix is zero" : "matrix is zero");
  }

  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(rows.rows() - 1);

  // Seed: the row with the largest mean absolute entry.
  Eigen::Index seed_row = 0;
  x.cwiseAbs().rowwise().mean().maxCoeff(&seed_row);
  Eigen::VectorXd init = x.row(seed_row).transpose();
  if (init.norm() == 0.0) init = Eigen::VectorXd::Unit(x.cols(), 0);

  const linalg::EigenPair top = linalg::dominant_eigenpair(cov, init.normalized(), opts.power);
  const double second = linalg::second_eigenvalue(cov, top, opts.power);
  if (top.value - second < opts.min_relative_gap * top.value) {
    throw Error(Errc::NoConvergence, "top two eigenvalues are degenerate (gap " +
                                         std::to_string(top.value - second) + ")");
  }

  Eigen::VectorXd v = top.vector.normalized();
  const double proj = mean.dot(v);
  if (proj < 0) {
    v = -v;
  } else if (proj == 0.0) {
    fix_sign_by_largest_entry(v);
  }
  return v;
}

FeatureDirection extract_direction_pca(const DifferenceMatrix& m, const PcaOptions& opts) {
  FeatureDirection d;
  d.v = principal_direction(m.rows, opts);
  d.layer = m.layer;
  d.feature = m.feature;
  d.strategy = Strategy::feature_gaps;
  d.sign_convention = std::string(kSignPosMinusNeg);
  return d;
}

FeatureDirection extract_direction_ablation(const DatasetManifest& manifest, Feature feature, int layer,
                                            Strategy strategy, std::uint64_t seed, const PcaOptions& opts) {
  check_layer(manifest, layer);
  FeatureDirection d;
  d.layer = layer;
  d.feature = feature;
  d.strategy = strategy;
  d.manifest_digest = manifest.digest;

  switch (strategy) {
    case Strategy::feature_gaps: {
      d = extract_direction_pca(build_difference_matrix(manifest, feature, layer), opts);
      d.manifest_digest = manifest.digest;
      return d;
    }
    case Strategy::random: {
      std::mt19937_64 rng(seed);
      std::normal_distribution<double> normal(0.0, 1.0);
      Eigen::VectorXd v(manifest.meta.hidden_dim);
      do {
        for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = normal(rng);
      } while (v.norm() == 0.0);
      d.v = v.normalized();
      d.sign_convention = "none";
      return d;
    }
    case Strategy::positive_pca:
      d.v = principal_direction(stack_layer(manifest, positive_variant(feature), layer), opts);
      d.sign_convention = "mean row projects non-negative";
      return d;
    case Strategy::negative_pca:
      d.v = principal_direction(stack_layer(manifest, negative_variant(feature), layer), opts);
      d.sign_convention = "mean row projects non-negative";
      return d;
    case Strategy::all_pca:
      d.v = principal_direction(stack_layer(manifest, Variant::standard, layer), opts);
      d.sign_convention = "mean row projects non-negative";
      return d;
    case Strategy::mean_diff: {
      const Eigen::MatrixXd h = stack_layer(manifest, Variant::standard, layer);
      Eigen::VectorXd mean_correct = Eigen::VectorXd::Zero(h.cols());
      Eigen::VectorXd mean_wrong = Eigen::VectorXd::Zero(h.cols());
      int n_correct = 0;
      int n_wrong = 0;
      for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
        if (manifest.samples[i].correct == 1) {
          mean_correct += h.row(static_cast<Eigen::Index>(i)).transpose();
          ++n_correct;
        } else {
          mean_wrong += h.row(static_cast<Eigen::Index>(i)).transpose();
          ++n_wrong;
        }
      }
      if (n_correct == 0 || n_wrong == 0) {
        throw Error(Errc::MeanDiffNeedsBothClasses, "mean_diff needs correct and incorrect samples");
      }
      const Eigen::VectorXd diff = mean_correct / n_correct - mean_wrong / n_wrong;
      if (diff.norm() == 0.0) throw Error(Errc::DegenerateMatrix, "class means coincide");
      d.v = diff.normalized();
      d.sign_convention = "correct-minus-incorrect";
      return d;
    }
  }
  throw Error(Errc::InvalidArgument, "unhandled strategy");
}

std::filesystem::path direction_sidecar_path(const std::filesystem::path& tensor_path) {
  std::filesystem::path p = tensor_path;
  p.replace_extension(".json");
  return p;
}

void write_direction(const FeatureDirection& dir, const std::filesystem::path& tensor_path) {
  TensorMap tensors;
  tensors.emplace("direction", Tensor::from_vector(dir.v));
  write_tensor_file(tensors, tensor_path);
  json side = {{"feature", feature_name(dir.feature)},
               {"layer", dir.layer},
               {"strategy", strategy_name(dir.strategy)},
               {"manifest_digest", dir.manifest_digest},
               {"sign_convention", dir.sign_convention}};
  write_text_file(direction_sidecar_path(tensor_path), side.dump(1) + "\n");
}

FeatureDirection read_direction(const std::filesystem::path& tensor_path) {
  const TensorFile file = read_tensor_file(tensor_path);
  const auto it = file.tensors.find("direction");
  if (it == file.tensors.end()) {
    throw Error(Errc::SchemaError, tensor_path.filename().string() + ": missing tensor 'direction'");
  }
  FeatureDirection d;
  // Stored as f32; renormalize so downstream arithmetic sees a unit vector.
  d.v = it->second.to_vector();
  if (d.v.norm() == 0.0) throw Error(Errc::DegenerateMatrix, tensor_path.filename().string() + ": zero direction");
  d.v.normalize();

  std::ifstream in(direction_sidecar_path(tensor_path));
  if (!in) throw Error(Errc::IoFailure, "missing sidecar for " + tensor_path.string());
  json side;
  try {
    side = json::parse(in);
    d.feature = parse_feature(side.at("feature").get<std::string>());
    d.layer = side.at("layer").get<int>();
    d.strategy = parse_strategy(side.at("strategy").get<std::string>());
    d.manifest_digest = side.at("manifest_digest").get<std::string>();
    d.sign_convention = side.at("sign_convention").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(Errc::SchemaError, "bad direction sidecar " + tensor_path.string() + ": " + e.what());
  }
  return d;
}

}  // namespace fgaps
