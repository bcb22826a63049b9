#include "fgaps/synthetic.hpp"

#include <cmath>
#include <random>
#include <string>

#include "fgaps/errors.hpp"
#include "fgaps/tensorio.hpp"

namespace fgaps::synthetic {
namespace {

Eigen::VectorXd random_unit(std::mt19937_64& rng, int d) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(d);
  for (int i = 0; i < d; ++i) v(i) = normal(rng);
  return v.normalized();
}

Eigen::MatrixXd noise(std::mt19937_64& rng, int rows, int cols, double sigma) {
  std::normal_distribution<double> normal(0.0, sigma);
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = normal(rng);
  return m;
}

DatasetManifest make_split(const PlantedConfig& cfg, const std::string& split, int count, std::mt19937_64& rng,
                           const Eigen::MatrixXd& layer_offsets, const Eigen::VectorXd& planted,
                           const Eigen::VectorXd& decoy) {
  const int rows = cfg.num_layers + 1;
  const int d = cfg.hidden_dim;
  std::bernoulli_distribution is_correct(cfg.correct_rate);
  std::normal_distribution<double> strength(cfg.contrast_mean, cfg.contrast_std);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> length(3, 12);

  DatasetManifest m;
  m.meta = {cfg.num_layers, d, "synthetic"};
  for (int i = 0; i < count; ++i) {
    Sample s;
    s.id = split + "-" + std::to_string(i);
    s.split = split;
    s.correct = is_correct(rng) ? 1 : 0;
    s.question = "synthetic question " + std::to_string(i);
    s.answer = "synthetic answer " + std::to_string(i);
    s.context = "synthetic context";
    const double sign = s.correct ? 1.0 : -1.0;

    ActivationBundle standard;
    standard.variant = Variant::standard;
    standard.hidden_mean = layer_offsets + noise(rng, rows, d, cfg.noise);
    standard.hidden_mean.row(cfg.planted_layer) += cfg.signal * sign * planted.transpose();
    standard.answer_token_count = length(rng);
    if (cfg.with_logprobs) {
      Eigen::VectorXd lp(standard.answer_token_count);
      const double mean_nll = 0.3 + 0.5 * (1 - s.correct);
      for (Eigen::Index t = 0; t < lp.size(); ++t) lp(t) = -std::abs(mean_nll + 0.4 * normal(rng));
      standard.logprobs = lp;
      std::vector<double> sums(5);
      for (double& v : sums) v = -(standard.answer_token_count * mean_nll) + 1.5 * normal(rng);
      s.sampled_logprob_sums = sums;
    }

    for (Variant v : kAllVariants) {
      if (v == Variant::standard) continue;
      ActivationBundle b;
      b.variant = v;
      b.answer_token_count = standard.answer_token_count;
      b.hidden_mean = standard.hidden_mean + noise(rng, rows, d, cfg.noise);
      const bool positive = v == Variant::honesty_pos || v == Variant::reliance_pos || v == Variant::comprehension_pos;
      if (positive) {
        b.hidden_mean.row(cfg.planted_layer) += strength(rng) * planted.transpose();
        if (cfg.decoy_layer >= 0) b.hidden_mean.row(cfg.decoy_layer) += strength(rng) * decoy.transpose();
      }
      s.bundles.emplace(v, std::move(b));
    }
    s.bundles.emplace(Variant::standard, std::move(standard));
    m.samples.push_back(std::move(s));
  }
  return m;
}

}  // namespace

void save_dataset(DatasetManifest& manifest, const std::filesystem::path& manifest_path) {
  const std::filesystem::path base = manifest_path.parent_path();
  for (Sample& s : manifest.samples) {
    s.bundle_paths.clear();
    for (const auto& [v, b] : s.bundles) {
      const std::filesystem::path rel =
          std::filesystem::path("bundles") / s.id / (std::string(variant_name(v)) + ".tensors");
      write_bundle(b, base / rel);
      s.bundle_paths.emplace(v, rel);
    }
  }
  write_manifest_json(manifest, manifest_path);
}

PlantedDataset generate_planted(const PlantedConfig& cfg, const std::filesystem::path& out_dir) {
  if (cfg.planted_layer < 0 || cfg.planted_layer > cfg.num_layers || cfg.decoy_layer > cfg.num_layers ||
      cfg.decoy_layer == cfg.planted_layer || cfg.hidden_dim < 2) {
    throw Error(Errc::InvalidArgument, "planted/decoy layers must be distinct and within 0..L, d >= 2");
  }
  std::mt19937_64 rng(cfg.seed);
  PlantedDataset out;
  out.planted_direction = random_unit(rng, cfg.hidden_dim);
  Eigen::VectorXd decoy = random_unit(rng, cfg.hidden_dim);
  decoy -= decoy.dot(out.planted_direction) * out.planted_direction;
  out.decoy_direction = decoy.normalized();
  const Eigen::MatrixXd offsets = noise(rng, cfg.num_layers + 1, cfg.hidden_dim, 1.0);

  std::filesystem::create_directories(out_dir);
  DatasetManifest train = make_split(cfg, "train", cfg.train_samples, rng, offsets, out.planted_direction,
                                     out.decoy_direction);
  DatasetManifest eval = make_split(cfg, "eval", cfg.eval_samples, rng, offsets, out.planted_direction,
                                    out.decoy_direction);
  out.train_manifest = out_dir / "train.json";
  out.eval_manifest = out_dir / "eval.json";
  save_dataset(train, out.train_manifest);
  save_dataset(eval, out.eval_manifest);

  TensorMap truth;
  truth.emplace("planted_direction", Tensor::from_vector(out.planted_direction));
  truth.emplace("decoy_direction", Tensor::from_vector(out.decoy_direction));
  write_tensor_file(truth, out_dir / "planted.tensors");
  return out;
}

}  // namespace fgaps::synthetic
