#include "fgaps/scoring.hpp"

#include <cmath>
#include <fstream>

#include "fgaps/digest.hpp"
#include "fgaps/errors.hpp"
#include "fgaps/metrics.hpp"
#include "fgaps/tensorio.hpp"

namespace fgaps {
namespace {

using json = nlohmann::json;

double softplus(double a) noexcept { return std::max(a, 0.0) + std::log1p(std::exp(-std::abs(a))); }

void require_both_classes(std::span<const int> labels) {
  bool has0 = false;
  bool has1 = false;
  for (int y : labels) (y ? has1 : has0) = true;
  if (!has0 || !has1) throw Error(Errc::SingleClassLabels, "labels contain a single class");
}

json vec_json(const Eigen::Vector3d& v) { return json::array({v(0), v(1), v(2)}); }

Eigen::Vector3d vec_from_json(const json& j, const char* key) {
  const auto vals = j.at(key).get<std::vector<double>>();
  if (vals.size() != 3) throw Error(Errc::SchemaError, std::string("model field '") + key + "' must have 3 entries");
  return {vals[0], vals[1], vals[2]};
}

}  // namespace

double sigmoid(double x) noexcept {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double layer_score(const ActivationBundle& bundle, const FeatureDirection& direction) {
  if (direction.layer < 0 || direction.layer > bundle.num_layers()) {
    throw Error(Errc::LayerOutOfRange, "direction layer " + std::to_string(direction.layer) +
                                           " outside bundle layers 0.." + std::to_string(bundle.num_layers()));
  }
  if (direction.v.size() != bundle.hidden_dim()) {
    throw Error(Errc::ShapeMismatch, "direction has dimension " + std::to_string(direction.v.size()) +
                                         ", bundle has " + std::to_string(bundle.hidden_dim()));
  }
  return bundle.hidden_mean.row(direction.layer).dot(direction.v);
}

LayerScoreTable select_layer(const DatasetManifest& manifest, Feature feature,
                             std::span<const FeatureDirection> directions) {
  const std::vector<int> labels = manifest.labels();
  require_both_classes(labels);

  LayerScoreTable table;
  table.feature = feature;
  for (int l = 0; l <= manifest.meta.num_layers; ++l) table.layers.push_back({l, 0.0, false, "no direction"});

  for (const FeatureDirection& dir : directions) {
    if (dir.layer < 0 || dir.layer > manifest.meta.num_layers) {
      throw Error(Errc::LayerOutOfRange, "direction for layer " + std::to_string(dir.layer));
    }
    LayerScoreEntry& entry = table.layers[static_cast<std::size_t>(dir.layer)];
    std::vector<double> u;
    u.reserve(manifest.samples.size());
    for (const Sample& s : manifest.samples) u.push_back(-layer_score(s.bundle(Variant::standard), dir));
    const auto [lo, hi] = std::minmax_element(u.begin(), u.end());
    const auto pairs = make_pairs(u, labels);
    entry.prr = prr(pairs);
    if (*lo == *hi) {
      entry.usable = false;
      entry.note = "constant scores";
    } else {
      entry.usable = true;
      entry.note.clear();
    }
  }

  for (const auto& e : table.layers) {
    if (!e.usable) continue;
    if (table.selected_layer < 0 || e.prr > table.layers[static_cast<std::size_t>(table.selected_layer)].prr) {
      table.selected_layer = e.layer;
    }
  }
  if (table.selected_layer < 0) {
    throw Error(Errc::NoUsableLayer, std::string(feature_name(feature)) + " has no usable layer");
  }
  return table;
}

json to_json(const LayerScoreTable& table) {
  json layers = json::array();
  for (const auto& e : table.layers) {
    json j = {{"layer", e.layer}, {"prr", e.prr}, {"usable", e.usable}};
    if (!e.note.empty()) j["note"] = e.note;
    layers.push_back(std::move(j));
  }
  return {{"feature", feature_name(table.feature)}, {"layers", layers}, {"selected_layer", table.selected_layer}};
}

json to_json(const TrainConfig& cfg) {
  return {{"learning_rate", cfg.learning_rate},
          {"epochs", cfg.epochs},
          {"l2_lambda", cfg.l2_lambda},
          {"intercept", cfg.intercept}};
}

LossAndGradient logistic_loss_and_gradient(const Eigen::MatrixXd& z, std::span<const int> labels,
                                           const Eigen::VectorXd& w, double b, double l2_lambda) {
  if (static_cast<std::size_t>(z.rows()) != labels.size() || z.cols() != w.size()) {
    throw Error(Errc::ShapeMismatch, "design matrix, labels and weights disagree");
  }
  const auto n = static_cast<double>(z.rows());
  const Eigen::VectorXd logits = (z * w).array() + b;
  LossAndGradient out;
  Eigen::VectorXd residual(z.rows());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double a = logits(i);
    const double y = labels[static_cast<std::size_t>(i)];
    loss += softplus(a) - y * a;
    residual(i) = sigmoid(a) - y;
  }
  out.loss = loss / n + 0.5 * l2_lambda * w.squaredNorm();
  out.grad_w = z.transpose() * residual / n + l2_lambda * w;
  out.grad_b = residual.sum() / n;
  return out;
}

LogisticFit fit_logistic(const Eigen::MatrixXd& z, std::span<const int> labels, const TrainConfig& cfg) {
  require_both_classes(labels);
  if (cfg.epochs < 0 || !(cfg.learning_rate > 0) || !(cfg.l2_lambda >= 0)) {
    throw Error(Errc::InvalidArgument, "epochs >= 0, learning_rate > 0 and l2_lambda >= 0 required");
  }
  LogisticFit fit;
  fit.w = Eigen::VectorXd::Zero(z.cols());
  if (cfg.intercept) {
    double pos = 0;
    for (int y : labels) pos += y;
    const double rate = pos / static_cast<double>(labels.size());
    fit.b = std::log(rate / (1.0 - rate));
  }
  for (int epoch = 0; epoch <= cfg.epochs; ++epoch) {
    const LossAndGradient lg = logistic_loss_and_gradient(z, labels, fit.w, fit.b, cfg.l2_lambda);
    if (!std::isfinite(lg.loss)) {
      throw Error(Errc::NonFiniteLoss, "loss became non-finite at epoch " + std::to_string(epoch));
    }
    fit.loss_history.push_back(lg.loss);
    if (epoch == cfg.epochs) break;
    fit.w -= cfg.learning_rate * lg.grad_w;
    if (cfg.intercept) fit.b -= cfg.learning_rate * lg.grad_b;
  }
  return fit;
}

Eigen::MatrixXd raw_feature_scores(const DatasetManifest& manifest, const std::array<EnsembleFeature, 3>& features) {
  Eigen::MatrixXd s(static_cast<Eigen::Index>(manifest.samples.size()), 3);
  for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
    const ActivationBundle& b = manifest.samples[i].bundle(Variant::standard);
    for (int k = 0; k < 3; ++k) {
      s(static_cast<Eigen::Index>(i), k) = layer_score(b, features[static_cast<std::size_t>(k)].direction);
    }
  }
  return s;
}

EnsembleModel train_ensemble(const DatasetManifest& manifest, const std::array<EnsembleFeature, 3>& features,
                             const TrainConfig& cfg) {
  const std::vector<int> labels = manifest.labels();
  require_both_classes(labels);
  if (labels.size() < 8) throw Error(Errc::TooFewSamples, "training needs at least 8 samples");

  EnsembleModel model;
  model.features = features;
  model.train_config = cfg;
  model.manifest_digest = manifest.digest;

  const Eigen::MatrixXd raw = raw_feature_scores(manifest, features);
  model.mu = raw.colwise().mean().transpose();
  const Eigen::MatrixXd centered = raw.rowwise() - model.mu.transpose();
  for (int k = 0; k < 3; ++k) {
    const double var = centered.col(k).squaredNorm() / static_cast<double>(raw.rows());
    model.sigma(k) = std::max(std::sqrt(var), 1e-12);
  }
  const Eigen::MatrixXd z = centered.array().rowwise() / model.sigma.transpose().array();

  LogisticFit fit = fit_logistic(z, labels, cfg);
  model.w = fit.w;
  model.b = fit.b;
  model.final_loss = fit.loss_history.back();
  model.loss_history = std::move(fit.loss_history);
  return model;
}

UncertaintyScore score(const ActivationBundle& bundle, const EnsembleModel& model) {
  UncertaintyScore out;
  double logit = model.b;
  for (int k = 0; k < 3; ++k) {
    const FeatureDirection& dir = model.features[static_cast<std::size_t>(k)].direction;
    if (dir.v.size() != bundle.hidden_dim() || dir.layer > bundle.num_layers()) {
      throw Error(Errc::ShapeMismatch, "bundle shape does not match the model's directions");
    }
    const double s = layer_score(bundle, dir);
    out.per_feature[static_cast<std::size_t>(k)] = s;
    logit += model.w(k) * (s - model.mu(k)) / model.sigma(k);
  }
  out.u = -logit;
  out.p_correct = sigmoid(logit);
  return out;
}

json to_json(const EnsembleModel& model) {
  json feats = json::array();
  for (const auto& f : model.features) {
    feats.push_back({{"name", feature_name(f.direction.feature)},
                     {"layer", f.direction.layer},
                     {"strategy", strategy_name(f.direction.strategy)},
                     {"direction_path", f.direction_path},
                     {"direction_digest", f.direction_digest}});
  }
  return {{"features", feats},
          {"mu", vec_json(model.mu)},
          {"sigma", vec_json(model.sigma)},
          {"w", vec_json(model.w)},
          {"b", model.b},
          {"train_config", to_json(model.train_config)},
          {"final_loss", model.final_loss},
          {"manifest_digest", model.manifest_digest}};
}

void save_model(const EnsembleModel& model, const std::filesystem::path& path, const json& extra) {
  json j = to_json(model);
  if (extra.is_object())
    for (const auto& [k, v] : extra.items()) j[k] = v;
  write_text_file(path, j.dump(1) + "\n");
}

EnsembleModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoFailure, "cannot open model " + path.string());
  EnsembleModel model;
  try {
    const json j = json::parse(in);
    const json& feats = j.at("features");
    if (!feats.is_array() || feats.size() != 3) throw Error(Errc::SchemaError, "model needs exactly 3 features");
    for (std::size_t k = 0; k < 3; ++k) {
      EnsembleFeature& f = model.features[k];
      f.direction_path = feats[k].at("direction_path").get<std::string>();
      f.direction_digest = feats[k].value("direction_digest", "");
      const std::filesystem::path dpath = path.parent_path() / f.direction_path;
      if (!f.direction_digest.empty() && sha256_file(dpath) != f.direction_digest) {
        throw Error(Errc::DigestMismatch, "direction file changed since training: " + f.direction_path);
      }
      f.direction = read_direction(dpath);
      f.direction.layer = feats[k].at("layer").get<int>();
    }
    model.mu = vec_from_json(j, "mu");
    model.sigma = vec_from_json(j, "sigma");
    model.w = vec_from_json(j, "w");
    model.b = j.at("b").get<double>();
    const json& tc = j.at("train_config");
    model.train_config.learning_rate = tc.at("learning_rate").get<double>();
    model.train_config.epochs = tc.at("epochs").get<int>();
    model.train_config.l2_lambda = tc.at("l2_lambda").get<double>();
    model.train_config.intercept = tc.at("intercept").get<bool>();
    model.final_loss = j.value("final_loss", 0.0);
    model.manifest_digest = j.value("manifest_digest", "");
  } catch (const json::exception& e) {
    throw Error(Errc::SchemaError, "bad model artifact " + path.string() + ": " + e.what());
  }
  for (int k = 0; k < 3; ++k) {
    if (!(model.sigma(k) >= 1e-12)) throw Error(Errc::SchemaError, "model sigma entries must be >= 1e-12");
  }
  return model;
}

double baseline_perplexity(const ActivationBundle& bundle) {
  if (!bundle.logprobs || bundle.logprobs->size() == 0) {
    throw Error(Errc::MissingLogprobs, "bundle carries no answer-token logprobs");
  }
  return std::exp(-bundle.logprobs->mean());
}

double baseline_entropy(std::span<const double> sampled_logprob_sums) {
  if (sampled_logprob_sums.size() < 2) {
    throw Error(Errc::TooFewSamples, "entropy baseline needs at least two sampled sequences");
  }
  double sum = 0.0;
  for (double s : sampled_logprob_sums) sum += s;
  return -sum / static_cast<double>(sampled_logprob_sums.size());
}

}  // namespace fgaps
