#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "fgaps/directions.hpp"
#include "fgaps/manifest.hpp"

namespace fgaps {

/// s = h[layer] . v on the bundle's token-averaged hidden state.
double layer_score(const ActivationBundle& bundle, const FeatureDirection& direction);

struct LayerScoreEntry {
  int layer = 0;
  double prr = 0.0;
  bool usable = false;
  std::string note;  // why a layer is unusable
};

struct LayerScoreTable {
  Feature feature = Feature::honesty;
  std::vector<LayerScoreEntry> layers;  // one entry per layer 0..L
  int selected_layer = -1;
};

/// Scores every sample's standard bundle against each available direction and
/// keeps the layer whose -s ranks errors best by PRR. Layers without a
/// direction or with constant scores are unusable. Ties go to the lower layer.
LayerScoreTable select_layer(const DatasetManifest& manifest, Feature feature,
                             std::span<const FeatureDirection> directions);

nlohmann::json to_json(const LayerScoreTable& table);

struct TrainConfig {
  double learning_rate = 0.1;
  int epochs = 500;
  double l2_lambda = 1e-3;
  bool intercept = true;
};

nlohmann::json to_json(const TrainConfig& cfg);

struct LossAndGradient {
  double loss = 0.0;
  Eigen::VectorXd grad_w;
  double grad_b = 0.0;
};

/// Mean binary cross-entropy of sigmoid(Z w + b) against labels plus
/// (l2/2)|w|^2; the intercept is not penalized.
LossAndGradient logistic_loss_and_gradient(const Eigen::MatrixXd& z, std::span<const int> labels,
                                           const Eigen::VectorXd& w, double b, double l2_lambda);

struct LogisticFit {
  Eigen::VectorXd w;
  double b = 0.0;
  std::vector<double> loss_history;  // loss before epoch 1, then after each epoch
};

/// Full-batch gradient descent from w = 0, b = logit(base rate) (b = 0 without intercept).
LogisticFit fit_logistic(const Eigen::MatrixXd& z, std::span<const int> labels, const TrainConfig& cfg);

struct EnsembleFeature {
  FeatureDirection direction;  // carries feature and layer
  std::string direction_path;  // relative to the model artifact, empty if in-memory
  std::string direction_digest;
};

struct EnsembleModel {
  std::array<EnsembleFeature, 3> features;
  Eigen::Vector3d mu = Eigen::Vector3d::Zero();
  Eigen::Vector3d sigma = Eigen::Vector3d::Ones();
  Eigen::Vector3d w = Eigen::Vector3d::Zero();
  double b = 0.0;
  TrainConfig train_config;
  double final_loss = 0.0;
  std::vector<double> loss_history;
  std::string manifest_digest;
};

// Raw per-feature dot products for every sample's standard bundle (T x 3).
Eigen::MatrixXd raw_feature_scores(const DatasetManifest& manifest, const std::array<EnsembleFeature, 3>& features);

EnsembleModel train_ensemble(const DatasetManifest& manifest, const std::array<EnsembleFeature, 3>& features,
                             const TrainConfig& cfg);

struct UncertaintyScore {
  double u = 0.0;  // -(w.z + b)
  double p_correct = 0.5;
  std::array<double, 3> per_feature{};
};

UncertaintyScore score(const ActivationBundle& bundle, const EnsembleModel& model);

double sigmoid(double x) noexcept;

// Model artifact JSON. Direction tensors are referenced by path relative to the model file.
nlohmann::json to_json(const EnsembleModel& model);
void save_model(const EnsembleModel& model, const std::filesystem::path& path, const nlohmann::json& extra = {});
EnsembleModel load_model(const std::filesystem::path& path);

/// exp(-mean(logprobs)) of the greedy answer.
double baseline_perplexity(const ActivationBundle& bundle);

/// -mean of sampled sequence log-probabilities; needs at least two samples.
double baseline_entropy(std::span<const double> sampled_logprob_sums);

}  // namespace fgaps
