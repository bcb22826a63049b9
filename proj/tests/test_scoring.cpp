#include <doctest.h>

#include <cmath>
#include <random>

#include "fgaps/digest.hpp"
#include "fgaps/errors.hpp"
#include "fgaps/metrics.hpp"
#include "fgaps/scoring.hpp"
#include "fgaps/synthetic.hpp"
#include "fgaps/tensorio.hpp"
#include "support.hpp"

using namespace fgaps;
using fgaps::testing::ScratchDir;

namespace {

FeatureDirection axis_direction(int dim, int axis, int layer, Feature f = Feature::honesty) {
  FeatureDirection d;
  d.v = Eigen::VectorXd::Unit(dim, axis);
  d.layer = layer;
  d.feature = f;
  return d;
}

// Standard bundles only; layer rows produced by fill(sample index, layer).
template <class Fill>
DatasetManifest standard_manifest(const std::vector<int>& labels, int layers, int dim, Fill fill) {
  DatasetManifest m;
  m.meta = {layers, dim, "test"};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    Sample s;
    s.id = "s" + std::to_string(i);
    s.correct = labels[i];
    Eigen::MatrixXd h(layers + 1, dim);
    for (int l = 0; l <= layers; ++l) h.row(l) = fill(i, l);
    s.bundles.emplace(Variant::standard, testing::make_bundle(h, Variant::standard));
    m.samples.push_back(std::move(s));
  }
  return m;
}

std::array<EnsembleFeature, 3> axis_features(int dim, int layer) {
  std::array<EnsembleFeature, 3> f;
  for (int k = 0; k < 3; ++k) f[static_cast<std::size_t>(k)].direction = axis_direction(dim, k, layer, kAllFeatures[static_cast<std::size_t>(k)]);
  return f;
}

DatasetManifest noisy_manifest(int n, std::uint64_t seed, double signal) {
  std::mt19937_64 rng(seed);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = (i * 7 + 3) % 5 < 2 ? 0 : 1;
  const Eigen::MatrixXd noise = testing::gaussian(rng, n, 4);
  return standard_manifest(labels, 1, 4, [&](std::size_t i, int l) {
    Eigen::RowVectorXd r = noise.row(static_cast<Eigen::Index>(i));
    if (l == 1) r.head(3).array() += signal * (labels[i] ? 1.0 : -1.0);
    return r;
  });
}

}  // namespace

TEST_CASE("layer score is the dot product at the direction's layer") {
  ActivationBundle b = testing::make_bundle(Eigen::RowVector3d(1, 2, 3), Variant::standard);
  CHECK(layer_score(b, axis_direction(3, 0, 0)) == 1.0);
  b.hidden_mean.setZero();
  CHECK(layer_score(b, axis_direction(3, 0, 0)) == 0.0);
  CHECK_THROWS_AS(layer_score(b, axis_direction(3, 0, 1)), Error);
  CHECK_THROWS_AS(layer_score(b, axis_direction(4, 0, 0)), Error);
}

TEST_CASE("layer score matches a scalar recomputation") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 100; ++t) {
    const Eigen::MatrixXd h = testing::gaussian(rng, 4, 9);
    FeatureDirection d;
    d.v = testing::gaussian(rng, 9, 1).col(0).normalized();
    d.layer = t % 4;
    double expect = 0;
    for (int j = 0; j < 9; ++j) expect += h(d.layer, j) * d.v(j);
    CHECK(std::abs(layer_score(testing::make_bundle(h, Variant::standard), d) - expect) <= 1e-12);
  }
}

TEST_CASE("select layer prefers the perfectly ranking layer over a constant one") {
  const std::vector<int> labels = {1, 0, 1, 1, 0, 0, 1, 0};
  const auto m = standard_manifest(labels, 6, 2, [&](std::size_t i, int l) {
    Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(2);
    if (l == 3) r(0) = labels[i] ? 1.0 + 0.1 * static_cast<double>(i) : -1.0 - 0.1 * static_cast<double>(i);
    if (l == 5) r(0) = 4.0;
    return r;
  });
  const std::vector<FeatureDirection> dirs = {axis_direction(2, 0, 3), axis_direction(2, 0, 5)};
  const LayerScoreTable t = select_layer(m, Feature::honesty, dirs);
  CHECK(t.selected_layer == 3);
  CHECK(t.layers[3].prr == 1.0);
  CHECK_FALSE(t.layers[5].usable);
  CHECK(t.layers[5].note == "constant scores");
  CHECK_FALSE(t.layers[0].usable);
  CHECK(t.layers.size() == 7);
}

TEST_CASE("select layer fails without a usable layer or with one class") {
  const auto m = standard_manifest({1, 0, 1, 0}, 2, 2, [](std::size_t, int) { return Eigen::RowVectorXd::Ones(2); });
  const std::vector<FeatureDirection> dirs = {axis_direction(2, 0, 0), axis_direction(2, 1, 2)};
  try {
    select_layer(m, Feature::honesty, dirs);
    FAIL("expected NoUsableLayer");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NoUsableLayer);
  }
  const auto one = standard_manifest({1, 1, 1}, 1, 2, [](std::size_t i, int) {
    return Eigen::RowVectorXd::Constant(2, static_cast<double>(i));
  });
  try {
    select_layer(one, Feature::honesty, std::vector<FeatureDirection>{axis_direction(2, 0, 0)});
    FAIL("expected SingleClassLabels");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::SingleClassLabels);
  }
}

TEST_CASE("equal prr ties go to the lower layer") {
  const std::vector<int> labels = {1, 0, 0, 1, 1, 0};
  const auto m = standard_manifest(labels, 7, 1, [&](std::size_t i, int) {
    return Eigen::RowVectorXd::Constant(1, static_cast<double>((i * 5) % 6));
  });
  const std::vector<FeatureDirection> dirs = {axis_direction(1, 0, 6), axis_direction(1, 0, 2)};
  const LayerScoreTable t = select_layer(m, Feature::honesty, dirs);
  CHECK(t.layers[2].prr == t.layers[6].prr);
  CHECK(t.selected_layer == 2);
}

TEST_CASE("planted signal at layer 7 selects layer 7") {
  ScratchDir dir("planted7");
  synthetic::PlantedConfig cfg;
  cfg.train_samples = 96;
  cfg.eval_samples = 8;
  cfg.planted_layer = 7;
  cfg.decoy_layer = 3;
  const auto ds = synthetic::generate_planted(cfg, dir.path());
  const DatasetManifest m = load_manifest(ds.train_manifest);
  for (Feature f : kAllFeatures) {
    std::vector<FeatureDirection> dirs;
    for (int l = 0; l <= m.meta.num_layers; ++l) {
      dirs.push_back(extract_direction_ablation(m, f, l, Strategy::feature_gaps, 0));
    }
    CHECK(select_layer(m, f, dirs).selected_layer == 7);
  }
}

TEST_CASE("analytic gradient matches central differences") {
  std::mt19937_64 rng(20);
  std::bernoulli_distribution coin(0.4);
  const Eigen::MatrixXd z = testing::gaussian(rng, 40, 3);
  std::vector<int> y(40);
  for (int& v : y) v = coin(rng) ? 1 : 0;
  const double h = 1e-6;
  for (int point = 0; point < 20; ++point) {
    const Eigen::VectorXd w = testing::gaussian(rng, 3, 1, 1.5).col(0);
    const double b = testing::gaussian(rng, 1, 1)(0, 0);
    const double lambda = point % 2 == 0 ? 1e-3 : 0.5;
    const LossAndGradient lg = logistic_loss_and_gradient(z, y, w, b, lambda);
    Eigen::VectorXd numeric(4);
    for (int k = 0; k < 3; ++k) {
      Eigen::VectorXd wp = w, wm = w;
      wp(k) += h;
      wm(k) -= h;
      numeric(k) = (logistic_loss_and_gradient(z, y, wp, b, lambda).loss -
                    logistic_loss_and_gradient(z, y, wm, b, lambda).loss) / (2 * h);
    }
    numeric(3) = (logistic_loss_and_gradient(z, y, w, b + h, lambda).loss -
                  logistic_loss_and_gradient(z, y, w, b - h, lambda).loss) / (2 * h);
    Eigen::VectorXd analytic(4);
    analytic << lg.grad_w, lg.grad_b;
    CHECK((analytic - numeric).norm() / std::max(analytic.norm(), 1e-12) <= 1e-5);
  }
}

TEST_CASE("separable scores train to low loss and near-perfect auroc") {
  std::mt19937_64 rng(3);
  std::vector<int> y(64);
  Eigen::MatrixXd z(64, 3);
  const Eigen::MatrixXd noise = testing::gaussian(rng, 64, 3, 0.3);
  for (int i = 0; i < 64; ++i) {
    y[static_cast<std::size_t>(i)] = i % 2;
    z.row(i) = noise.row(i).array() + (i % 2 ? 2.0 : -2.0);
  }
  const LogisticFit fit = fit_logistic(z, y, TrainConfig{});
  CHECK(fit.loss_history.back() < 0.1);
  std::vector<double> u(64);
  for (int i = 0; i < 64; ++i) u[static_cast<std::size_t>(i)] = -(z.row(i).dot(fit.w) + fit.b);
  CHECK(auroc(make_pairs(u, y)) >= 0.99);
  for (std::size_t e = 2; e < fit.loss_history.size(); ++e) CHECK(fit.loss_history[e] <= fit.loss_history[e - 1]);
}

TEST_CASE("training rejects single-class labels") {
  const Eigen::MatrixXd z = Eigen::MatrixXd::Random(5, 3);
  const std::vector<int> y(5, 1);
  try {
    fit_logistic(z, y, TrainConfig{});
    FAIL("expected SingleClassLabels");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::SingleClassLabels);
  }
}

TEST_CASE("diverging training reports a non-finite loss") {
  Eigen::MatrixXd z(2, 1);
  z << 1e200, -1e200;
  TrainConfig cfg;
  cfg.learning_rate = 1e200;
  cfg.epochs = 5;
  try {
    fit_logistic(z, std::vector<int>{1, 0}, cfg);
    FAIL("expected NonFiniteLoss");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NonFiniteLoss);
  }
}

TEST_CASE("zero epochs leave w at zero and p at the base rate") {
  const DatasetManifest m = noisy_manifest(40, 5, 1.0);
  TrainConfig cfg;
  cfg.epochs = 0;
  const EnsembleModel model = train_ensemble(m, axis_features(4, 1), cfg);
  CHECK(model.w.isZero(0.0));
  double rate = 0;
  for (int y : m.labels()) rate += y;
  rate /= 40;
  for (const Sample& s : m.samples) {
    CHECK(score(s.bundle(Variant::standard), model).p_correct == doctest::Approx(rate).epsilon(1e-12));
  }
  cfg.intercept = false;
  CHECK(train_ensemble(m, axis_features(4, 1), cfg).b == 0.0);
}

TEST_CASE("ensemble loss is non-increasing and sigma is the population spread") {
  const DatasetManifest m = noisy_manifest(60, 6, 0.8);
  const EnsembleModel model = train_ensemble(m, axis_features(4, 1), TrainConfig{});
  REQUIRE(model.loss_history.size() == 501);
  for (std::size_t e = 2; e < model.loss_history.size(); ++e) {
    CHECK(model.loss_history[e] <= model.loss_history[e - 1]);
  }
  const Eigen::MatrixXd raw = raw_feature_scores(m, model.features);
  for (int k = 0; k < 3; ++k) {
    const double mean = raw.col(k).mean();
    CHECK(model.mu(k) == doctest::Approx(mean).epsilon(1e-12));
    const double var = (raw.col(k).array() - mean).square().mean();
    CHECK(model.sigma(k) == doctest::Approx(std::sqrt(var)).epsilon(1e-12));
  }
}

TEST_CASE("p_correct is invariant to rescaling one feature") {
  const DatasetManifest train_set = noisy_manifest(80, 7, 0.7);
  const DatasetManifest test_set = noisy_manifest(30, 8, 0.7);
  const auto base = axis_features(4, 1);
  const EnsembleModel a = train_ensemble(train_set, base, TrainConfig{});
  for (double c : {0.01, 3.0, 250.0}) {
    auto scaled = base;
    scaled[1].direction.v *= c;
    const EnsembleModel b = train_ensemble(train_set, scaled, TrainConfig{});
    for (const Sample& s : test_set.samples) {
      CHECK(std::abs(score(s.bundle(Variant::standard), a).p_correct -
                     score(s.bundle(Variant::standard), b).p_correct) <= 1e-9);
    }
  }
}

TEST_CASE("score with zero weights is neutral") {
  EnsembleModel model;
  model.features = axis_features(4, 0);
  const ActivationBundle b = testing::make_bundle(Eigen::MatrixXd::Constant(1, 4, 3.0), Variant::standard);
  const UncertaintyScore s = score(b, model);
  CHECK(s.p_correct == 0.5);
  CHECK(s.u == 0.0);
}

TEST_CASE("score matches a scalar recomputation") {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 30; ++t) {
    EnsembleModel model;
    model.features = axis_features(5, 2);
    for (auto& f : model.features) f.direction.v = testing::gaussian(rng, 5, 1).col(0).normalized();
    model.mu = testing::gaussian(rng, 3, 1).col(0);
    model.sigma = testing::gaussian(rng, 3, 1).col(0).cwiseAbs().array() + 0.1;
    model.w = testing::gaussian(rng, 3, 1).col(0);
    model.b = 0.3;
    const Eigen::MatrixXd h = testing::gaussian(rng, 3, 5);
    const UncertaintyScore s = score(testing::make_bundle(h, Variant::standard), model);
    double logit = model.b;
    for (int k = 0; k < 3; ++k) {
      double dot = 0;
      for (int j = 0; j < 5; ++j) dot += h(2, j) * model.features[static_cast<std::size_t>(k)].direction.v(j);
      logit += model.w(k) * (dot - model.mu(k)) / model.sigma(k);
    }
    CHECK(std::abs(s.u + logit) <= 1e-12);
    CHECK(std::abs(s.p_correct - 1.0 / (1.0 + std::exp(-logit))) <= 1e-12);
  }
  EnsembleModel model;
  model.features = axis_features(5, 2);
  CHECK_THROWS_AS(score(testing::make_bundle(Eigen::MatrixXd::Zero(3, 4), Variant::standard), model), Error);
}

TEST_CASE("model artifacts are deterministic and digest-checked") {
  ScratchDir dir("model_rt");
  const DatasetManifest m = noisy_manifest(40, 10, 1.0);
  auto features = axis_features(4, 1);
  for (std::size_t k = 0; k < 3; ++k) {
    const std::string rel = "dir_" + std::to_string(k) + ".tensors";
    write_direction(features[k].direction, dir / rel);
    features[k].direction_path = rel;
    features[k].direction_digest = sha256_file(dir / rel);
  }
  save_model(train_ensemble(m, features, TrainConfig{}), dir / "a.json");
  save_model(train_ensemble(m, features, TrainConfig{}), dir / "b.json");
  CHECK(read_file_bytes(dir / "a.json") == read_file_bytes(dir / "b.json"));

  const EnsembleModel back = load_model(dir / "a.json");
  const EnsembleModel orig = train_ensemble(m, features, TrainConfig{});
  CHECK(back.w == orig.w);
  CHECK(back.b == orig.b);
  CHECK(back.features[2].direction.feature == Feature::context_comprehension);
  for (const Sample& s : m.samples) {
    CHECK(score(s.bundle(Variant::standard), back).u == score(s.bundle(Variant::standard), orig).u);
  }

  FeatureDirection other = features[0].direction;
  other.v = Eigen::VectorXd::Unit(4, 3);
  write_direction(other, dir / "dir_0.tensors");
  try {
    load_model(dir / "a.json");
    FAIL("expected DigestMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::DigestMismatch);
  }
}

TEST_CASE("perplexity baseline") {
  ActivationBundle b;
  b.logprobs = Eigen::Vector2d(0, 0);
  CHECK(baseline_perplexity(b) == 1.0);
  b.logprobs = Eigen::Vector2d(-1, -1);
  CHECK(baseline_perplexity(b) == doctest::Approx(2.718281828459045).epsilon(1e-15));
  std::mt19937_64 rng(4);
  const Eigen::VectorXd lp = -testing::gaussian(rng, 20, 1).col(0).cwiseAbs();
  b.logprobs = lp;
  double sum = 0;
  for (int i = 0; i < 20; ++i) sum += lp(i);
  CHECK(std::abs(baseline_perplexity(b) - std::exp(-sum / 20)) <= 1e-12);
  b.logprobs.reset();
  try {
    baseline_perplexity(b);
    FAIL("expected MissingLogprobs");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::MissingLogprobs);
  }
}

TEST_CASE("entropy baseline") {
  CHECK(baseline_entropy(std::vector<double>{-2, -2}) == 2.0);
  const std::vector<double> five = {-3.5, -1.25, -7.0, -0.5, -2.75};
  CHECK(std::abs(baseline_entropy(five) - 15.0 / 5) <= 1e-12);
  try {
    baseline_entropy(std::vector<double>{-1});
    FAIL("expected TooFewSamples");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::TooFewSamples);
  }
}
