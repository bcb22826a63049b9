#include <doctest.h>

#include <random>

#include "fgaps/directions.hpp"
#include "fgaps/errors.hpp"
#include "fgaps/linalg.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace fgaps;
using fgaps::testing::ScratchDir;
using fgaps::testing::oracle_top_eigenvector;
using fgaps::testing::oracle_gap;

namespace {

Eigen::MatrixXd random_orthogonal(std::mt19937_64& rng, int d) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(testing::gaussian(rng, d, d));
  return qr.householderQ() * Eigen::MatrixXd::Identity(d, d);
}

DatasetManifest two_dim_manifest(const std::vector<std::pair<Eigen::RowVector2d, int>>& standard) {
  DatasetManifest m;
  m.meta = {0, 2, "test"};
  int i = 0;
  for (const auto& [row, correct] : standard) {
    Sample s;
    s.id = "s" + std::to_string(i++);
    s.correct = correct;
    for (Variant v : kAllVariants) s.bundles.emplace(v, testing::make_bundle(Eigen::MatrixXd(row), v));
    m.samples.push_back(std::move(s));
  }
  return m;
}

}  // namespace

TEST_CASE("difference rows are componentwise pos minus neg") {
  DatasetManifest m = testing::random_manifest(1, 0, 2, 1);
  m.samples[0].bundles[Variant::honesty_pos].hidden_mean = Eigen::RowVector2d(1, 2);
  m.samples[0].bundles[Variant::honesty_neg].hidden_mean = Eigen::RowVector2d(0, 2);
  const DifferenceMatrix dm = build_difference_matrix(m, Feature::honesty, 0);
  CHECK(dm.rows.rows() == 1);
  CHECK(dm.rows(0, 0) == 1.0);
  CHECK(dm.rows(0, 1) == 0.0);
}

TEST_CASE("identical pos and neg bundles give a zero matrix") {
  DatasetManifest m = testing::random_manifest(4, 2, 3, 2);
  for (auto& s : m.samples) s.bundles[Variant::reliance_neg] = s.bundles[Variant::reliance_pos];
  CHECK(build_difference_matrix(m, Feature::context_reliance, 1).rows.isZero(0.0));
  CHECK_THROWS_AS(principal_direction(build_difference_matrix(m, Feature::context_reliance, 1).rows), Error);
}

TEST_CASE("difference matrix matches per-sample subtraction") {
  const DatasetManifest m = testing::random_manifest(8, 3, 4, 77);
  for (Feature f : kAllFeatures) {
    for (int layer = 0; layer <= 3; ++layer) {
      const DifferenceMatrix dm = build_difference_matrix(m, f, layer);
      for (int i = 0; i < 8; ++i) {
        const Sample& s = m.samples[static_cast<std::size_t>(i)];
        for (int j = 0; j < 4; ++j) {
          const double expect = s.bundle(positive_variant(f)).hidden_mean(layer, j) -
                                s.bundle(negative_variant(f)).hidden_mean(layer, j);
          CHECK(dm.rows(i, j) == expect);
        }
      }
    }
  }
}

TEST_CASE("difference matrix rejects bad layers and missing variants") {
  DatasetManifest m = testing::random_manifest(3, 2, 2, 3);
  try {
    build_difference_matrix(m, Feature::honesty, 3);
    FAIL("expected LayerOutOfRange");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::LayerOutOfRange);
  }
  m.samples[1].bundles.erase(Variant::comprehension_neg);
  try {
    build_difference_matrix(m, Feature::context_comprehension, 0);
    FAIL("expected MissingVariant");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::MissingVariant);
    CHECK(e.detail().find("sample-1") != std::string::npos);
  }
}

TEST_CASE("variance on one axis gives that axis with positive mean projection") {
  Eigen::MatrixXd rows(3, 2);
  rows << 2, 0, 4, 0, 6, 0;
  const Eigen::VectorXd v = principal_direction(rows);
  CHECK(v(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(v(1)) < 1e-12);
}

TEST_CASE("constant rows are degenerate") {
  Eigen::MatrixXd rows = Eigen::MatrixXd::Constant(4, 2, 3.0);
  try {
    principal_direction(rows);
    FAIL("expected DegenerateMatrix");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::DegenerateMatrix);
  }
}

TEST_CASE("isotropic spread has no unique direction") {
  Eigen::MatrixXd rows(4, 2);
  rows << 1, 0, -1, 0, 0, 1, 0, -1;
  try {
    principal_direction(rows);
    FAIL("expected NoConvergence");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NoConvergence);
  }
}

TEST_CASE("10x6 gaussian matches the dense eigen oracle") {
  std::mt19937_64 rng(10);
  const Eigen::MatrixXd rows = testing::gaussian(rng, 10, 6);
  const Eigen::VectorXd v = principal_direction(rows);
  CHECK(std::abs(v.dot(oracle_top_eigenvector(rows))) >= 1 - 1e-8);
  CHECK(v.norm() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("pca matches the eigen oracle across sizes and small gaps") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> t_dist(3, 50);
  std::uniform_int_distribution<int> d_dist(2, 32);
  std::uniform_real_distribution<double> log_gap(-6.0, 0.0);
  int checked = 0;
  while (checked < 200) {
    const int t = t_dist(rng);
    const int d = d_dist(rng);
    Eigen::MatrixXd rows = testing::gaussian(rng, t, d);
    if (checked % 2 == 1) rows = testing::with_top_gap(rows, 3.0, std::pow(10.0, log_gap(rng)));
    if (oracle_gap(rows) < 1e-6) continue;
    const Eigen::VectorXd v = principal_direction(rows);
    const double c = std::abs(v.dot(oracle_top_eigenvector(rows)));
    CHECK_MESSAGE(c >= 1 - 1e-8, "T=" << t << " d=" << d << " gap=" << oracle_gap(rows));
    ++checked;
  }
}

TEST_CASE("scale equivariance") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd rows = testing::gaussian(rng, 20, 6) + Eigen::MatrixXd::Constant(20, 6, 0.3);
    const Eigen::VectorXd v = principal_direction(rows);
    for (double c : {1e-3, 0.5, 7.0, 1e4}) {
      CHECK((principal_direction(c * rows) - v).norm() <= 1e-9);
    }
  }
}

TEST_CASE("rotation equivariance") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd rows = testing::gaussian(rng, 25, 5);
    const Eigen::MatrixXd q = random_orthogonal(rng, 5);
    const Eigen::VectorXd v = principal_direction(rows);
    const Eigen::VectorXd rotated = principal_direction(rows * q.transpose());
    CHECK(std::abs(rotated.dot(q * v)) >= 1 - 1e-8);
  }
}

TEST_CASE("sign convention: mean row projects non-negative") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::MatrixXd rows = testing::gaussian(rng, 12, 4);
    const Eigen::VectorXd v = principal_direction(rows);
    CHECK(rows.colwise().mean().dot(v) >= 0.0);
  }
}

TEST_CASE("uncentered pca uses the raw second moment") {
  std::mt19937_64 rng(12);
  const Eigen::MatrixXd rows = testing::gaussian(rng, 15, 4) + Eigen::MatrixXd::Constant(15, 4, 2.0);
  PcaOptions opts;
  opts.center = false;
  CHECK(std::abs(principal_direction(rows, opts).dot(oracle_top_eigenvector(rows, false))) >= 1 - 1e-8);
}

TEST_CASE("power iteration oracle: dominant eigenpair and spectral norm") {
  std::mt19937_64 rng(13);
  for (int d : {2, 5, 16, 64}) {
    const Eigen::MatrixXd a = testing::gaussian(rng, d, d);
    const Eigen::MatrixXd sym = a.transpose() * a;
    const auto top = linalg::dominant_eigenpair(sym, Eigen::VectorXd::Ones(d));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    CHECK(top.value == doctest::Approx(es.eigenvalues()(d - 1)).epsilon(1e-10));
    CHECK(std::abs(top.vector.dot(es.eigenvectors().col(d - 1))) >= 1 - 1e-10);
  }
}

TEST_CASE("mean_diff points from the wrong-class mean to the correct-class mean") {
  const DatasetManifest m = two_dim_manifest({{{2, 0}, 1}, {{2, 0}, 1}, {{0, 0}, 0}, {{0, 0}, 0}});
  const FeatureDirection d = extract_direction_ablation(m, Feature::honesty, 0, Strategy::mean_diff, 0);
  CHECK(d.v(0) == 1.0);
  CHECK(d.v(1) == 0.0);
}

TEST_CASE("mean_diff needs both classes") {
  const DatasetManifest m = two_dim_manifest({{{2, 0}, 1}, {{1, 3}, 1}});
  try {
    extract_direction_ablation(m, Feature::honesty, 0, Strategy::mean_diff, 0);
    FAIL("expected MeanDiffNeedsBothClasses");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::MeanDiffNeedsBothClasses);
  }
}

TEST_CASE("random strategy is reproducible per seed") {
  const DatasetManifest m = testing::random_manifest(4, 2, 8, 1);
  const auto a = extract_direction_ablation(m, Feature::honesty, 1, Strategy::random, 99);
  const auto b = extract_direction_ablation(m, Feature::honesty, 1, Strategy::random, 99);
  const auto c = extract_direction_ablation(m, Feature::honesty, 1, Strategy::random, 100);
  CHECK(a.v == b.v);
  CHECK(a.v != c.v);
  CHECK(a.v.norm() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("pca ablations match the eigen oracle on their stacked states") {
  const DatasetManifest m = testing::random_manifest(20, 2, 5, 31);
  const int layer = 1;
  auto stacked = [&](Variant v) {
    Eigen::MatrixXd h(20, 5);
    for (int i = 0; i < 20; ++i) h.row(i) = m.samples[static_cast<std::size_t>(i)].bundle(v).hidden_mean.row(layer);
    return h;
  };
  const struct {
    Strategy s;
    Variant v;
  } cases[] = {{Strategy::all_pca, Variant::standard},
               {Strategy::positive_pca, Variant::honesty_pos},
               {Strategy::negative_pca, Variant::honesty_neg}};
  for (const auto& c : cases) {
    const auto d = extract_direction_ablation(m, Feature::honesty, layer, c.s, 0);
    CHECK(std::abs(d.v.dot(oracle_top_eigenvector(stacked(c.v)))) >= 1 - 1e-8);
    CHECK(d.strategy == c.s);
  }
  const auto fg = extract_direction_ablation(m, Feature::honesty, layer, Strategy::feature_gaps, 0);
  CHECK(fg.v == extract_direction_pca(build_difference_matrix(m, Feature::honesty, layer)).v);
}

TEST_CASE("direction artifacts round trip") {
  ScratchDir dir("direction_rt");
  FeatureDirection d;
  std::mt19937_64 rng(3);
  d.v = testing::gaussian(rng, 7, 1).col(0).normalized();
  d.layer = 4;
  d.feature = Feature::context_comprehension;
  d.strategy = Strategy::feature_gaps;
  d.manifest_digest = "abc";
  write_direction(d, dir / "layer_04.tensors");
  const FeatureDirection back = read_direction(dir / "layer_04.tensors");
  CHECK(back.layer == 4);
  CHECK(back.feature == Feature::context_comprehension);
  CHECK(back.manifest_digest == "abc");
  CHECK(back.sign_convention == d.sign_convention);
  CHECK((back.v - d.v).norm() < 1e-6);
  CHECK(back.v.norm() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("feature and strategy names round trip") {
  for (Feature f : kAllFeatures) CHECK(parse_feature(feature_name(f)) == f);
  for (Strategy s : kAllStrategies) CHECK(parse_strategy(strategy_name(s)) == s);
  CHECK_THROWS_AS(parse_feature("bravery"), Error);
}
