#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "coegan/embed.hpp"
#include "coegan/rng.hpp"
#include "../support/oracles.hpp"

using namespace coegan;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform_real(rng, -1, 1);
  return m;
}

Eigen::MatrixXd points(std::initializer_list<std::pair<double, double>> pts) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(pts.size()), 2);
  Eigen::Index i = 0;
  for (auto [x, y] : pts) {
    m(i, 0) = x;
    m(i, 1) = y;
    ++i;
  }
  return m;
}

double entropy_perplexity(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0) h -= v * std::log2(v);
  return std::pow(2.0, h);
}

}  // namespace

TEST_CASE("pca: planar data is reconstructed exactly with two components") {
  Rng rng(1);
  const Eigen::MatrixXd basis = random_matrix(2, 10, rng);
  FeatureMatrix x;
  x.values = random_matrix(40, 2, rng) * basis;
  x.values.rowwise() += random_matrix(1, 10, rng).row(0);
  const PcaResult r = pca_reduce(x, 2);
  const Eigen::MatrixXd recon = (r.projected.values * r.components.transpose()).rowwise() + r.mean.transpose();
  CHECK((recon - x.values).cwiseAbs().maxCoeff() < 1e-9);
  CHECK_FALSE(r.rank_deficient);
}

TEST_CASE("pca: k = d keeps the total variance") {
  Rng rng(2);
  FeatureMatrix x;
  x.values = random_matrix(30, 6, rng);
  const PcaResult r = pca_reduce(x, 6);
  const Eigen::MatrixXd centred = x.values.rowwise() - x.values.colwise().mean();
  const double total = centred.squaredNorm() / 29.0;
  const Eigen::MatrixXd pc = r.projected.values;
  CHECK(std::abs(pc.squaredNorm() / 29.0 - total) < 1e-9);
  CHECK(std::abs(r.variances.sum() - total) < 1e-9);
}

TEST_CASE("pca: captured variance equals the top eigenvalues of the covariance") {
  Rng rng(3);
  FeatureMatrix x;
  x.values = random_matrix(50, 12, rng);
  const PcaResult r = pca_reduce(x, 5);
  const Eigen::MatrixXd centred = x.values.rowwise() - x.values.colwise().mean();
  const Eigen::MatrixXd cov = centred.transpose() * centred / 49.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  double top = 0.0;
  for (int i = 0; i < 5; ++i) top += es.eigenvalues()(11 - i);
  CHECK(std::abs(r.variances.sum() - top) < 1e-9);
  for (Eigen::Index i = 1; i < r.variances.size(); ++i) CHECK(r.variances(i) <= r.variances(i - 1));
  for (Eigen::Index c = 0; c < r.components.cols(); ++c) {
    Eigen::Index arg;
    r.components.col(c).cwiseAbs().maxCoeff(&arg);
    CHECK(r.components(arg, c) > 0.0);
  }
}

TEST_CASE("pca: more dims than samples and rank deficiency") {
  Rng rng(4);
  FeatureMatrix wide;
  wide.values = random_matrix(8, 40, rng);
  const PcaResult r = pca_reduce(wide, 8);
  CHECK(r.projected.d() == 8);
  CHECK(r.rank_deficient);  // 8 centred samples span at most 7 directions
  CHECK_THROWS_AS(pca_reduce(wide, 9), PreconditionError);
  CHECK_THROWS_AS(pca_reduce(wide, 0), PreconditionError);
}

TEST_CASE("perplexity: equidistant neighbours give a uniform row") {
  const std::vector<double> d(5, 2.0);
  const PerplexityRow row = perplexity_calibrate(d, 5.0);
  for (double p : row.probs) CHECK(p == doctest::Approx(0.2));
  CHECK(row.perplexity == doctest::Approx(5.0));
  CHECK_FALSE(row.degenerate);
}

TEST_CASE("perplexity: two near points hold the row mass at target 2") {
  std::vector<double> d{0.01, 0.02};
  for (int i = 0; i < 20; ++i) d.push_back(25.0 + i);
  const PerplexityRow row = perplexity_calibrate(d, 2.0);
  CHECK(row.probs[0] + row.probs[1] >= 0.95);
  CHECK(std::abs(entropy_perplexity(row.probs) - 2.0) < 1e-3);
  CHECK(row.iterations <= 100);
}

TEST_CASE("perplexity: out-of-range targets are rejected") {
  const std::vector<double> d{1.0, 2.0, 3.0};
  CHECK_THROWS_AS(perplexity_calibrate(d, 0.5), PreconditionError);
  CHECK_THROWS_AS(perplexity_calibrate(d, 3.5), PreconditionError);
}

TEST_CASE("perplexity: unreachable target is flagged and the row made uniform") {
  const std::vector<double> d{0.0, 0.0, 0.0, 5.0};
  const PerplexityRow row = perplexity_calibrate(d, 2.0);
  CHECK(row.degenerate);
  for (double p : row.probs) CHECK(p == doctest::Approx(0.25));
}

TEST_CASE("affinities are symmetric, non-negative, sum to one and hit the perplexity") {
  Rng rng(5);
  const Eigen::MatrixXd x = random_matrix(120, 10, rng);
  const AffinityModel m = compute_affinities(x, 30.0);
  CHECK((m.p - m.p.transpose()).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(m.p.minCoeff() >= 0.0);
  CHECK(std::abs(m.p.sum() - 1.0) < 1e-9);
  for (Eigen::Index i = 0; i < 120; ++i) CHECK(m.p(i, i) == 0.0);
  CHECK(m.degenerate_rows == 0);
  for (double a : m.achieved) CHECK(std::abs(a - 30.0) < kPerplexityTolerance);
}

TEST_CASE("t-SNE: determinism, KL descent and warnings") {
  Rng rng(6);
  FeatureMatrix x;
  x.values = random_matrix(60, 5, rng);
  TsneConfig cfg;
  cfg.perplexity = 10;
  cfg.iterations = 300;
  cfg.seed = 3;
  const TsneResult a = tsne_embed(x, cfg), b = tsne_embed(x, cfg);
  CHECK(a.points == b.points);
  REQUIRE(a.kl.size() == 300);
  CHECK(a.kl_at(300) < a.kl_at(cfg.exaggeration_iterations));
  CHECK(a.warnings.empty());
  cfg.perplexity = 30;
  CHECK_FALSE(tsne_embed(x, cfg).warnings.empty());
  FeatureMatrix four;
  four.values = random_matrix(4, 3, rng);
  CHECK_THROWS_AS(tsne_embed(four, TsneConfig{}), PreconditionError);
}

TEST_CASE("t-SNE: reported KL matches a direct evaluation at the final points") {
  Rng rng(7);
  FeatureMatrix x;
  x.values = random_matrix(40, 4, rng);
  TsneConfig cfg;
  cfg.perplexity = 8;
  cfg.iterations = 150;
  const TsneResult r = tsne_embed(x, cfg);
  const AffinityModel aff = compute_affinities(x.values, cfg.perplexity);
  double z = 0.0;
  const auto n = r.points.rows();
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j) z += 1.0 / (1.0 + (r.points.row(i) - r.points.row(j)).squaredNorm());
  double kl = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j || aff.p(i, j) <= 0) continue;
      const double q = 1.0 / (1.0 + (r.points.row(i) - r.points.row(j)).squaredNorm()) / z;
      kl += aff.p(i, j) * std::log(aff.p(i, j) / q);
    }
  CHECK(r.kl.back() == doctest::Approx(kl).epsilon(1e-9));
}

TEST_CASE("normalize_map") {
  const Eigen::MatrixXd unit = points({{0, 0}, {1, 1}, {0.5, 0.25}});
  const std::vector<std::string> labels(3, kDatasetLabel);
  CHECK(normalize_map(unit, labels, "t").points == unit);
  Eigen::MatrixXd affine = unit;
  affine.col(0) = affine.col(0) * 7.0 + Eigen::VectorXd::Constant(3, -2.0);
  affine.col(1) = affine.col(1) * 0.1 + Eigen::VectorXd::Constant(3, 40.0);
  CHECK((normalize_map(affine, labels, "t").points - unit).cwiseAbs().maxCoeff() < 1e-12);
  Rng rng(8);
  const EmbeddingMap m = normalize_map(random_matrix(20, 2, rng) * 13.0, std::vector<std::string>(20, "x"), "t");
  CHECK(m.points.minCoeff() == 0.0);
  CHECK(m.points.maxCoeff() == 1.0);
  CHECK(m.points.col(0).maxCoeff() == 1.0);
  CHECK(m.points.col(1).minCoeff() == 0.0);
  CHECK_THROWS_AS(normalize_map(points({{2, 2}, {2, 2}}), {"a", "b"}, "t"), PreconditionError);
}

TEST_CASE("grid montage") {
  const GridAssignment corners = grid_montage(points({{0, 0}, {1, 0}, {0, 1}, {1, 1}}), 2);
  CHECK(corners.cell == std::vector<std::size_t>{0, 1, 2, 3});
  const GridAssignment one = grid_montage(points({{0.3, 0.8}}), 3);
  CHECK(one.cell == std::vector<std::size_t>{6});  // row 2, column 0
  CHECK_THROWS_AS(grid_montage(points({{0, 0}, {1, 0}, {0, 1}, {1, 1}, {0.5, 0.5}}), 2), PreconditionError);

  Rng rng(9);
  Eigen::MatrixXd p(100, 2);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = uniform_real(rng);
  const GridAssignment a = grid_montage(p, 10);
  std::vector<std::size_t> cells = a.cell;
  std::sort(cells.begin(), cells.end());
  CHECK(std::unique(cells.begin(), cells.end()) == cells.end());
  // greedy baseline: each point in turn takes its nearest free cell
  std::vector<char> taken(100, 0);
  double greedy = 0.0;
  for (Eigen::Index i = 0; i < 100; ++i) {
    double best = 1e9;
    std::size_t arg = 0;
    for (std::size_t c = 0; c < 100; ++c) {
      if (taken[c]) continue;
      const double dx = p(i, 0) - (c % 10 + 0.5) / 10.0, dy = p(i, 1) - (c / 10 + 0.5) / 10.0;
      if (dx * dx + dy * dy < best) {
        best = dx * dx + dy * dy;
        arg = c;
      }
    }
    taken[arg] = 1;
    greedy += best;
  }
  CHECK(a.cost <= greedy + 1e-12);

  Tensor images({4, 1, 2, 2});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t k = 0; k < 4; ++k) images.data[i * 4 + k] = static_cast<float>(i);
  const Tensor mont = render_montage(corners, images);
  CHECK(mont.shape == Shape{1, 4, 4});
  CHECK(mont.data[0] == 0.0f);
  CHECK(mont.data[3] == 1.0f);
  CHECK(mont.data[15] == 3.0f);
}

TEST_CASE("map distances") {
  CHECK(map_distances(points({{0.2, 0.2}}), points({{0.2, 0.2}}))(0, 0) == 0.0);
  CHECK(map_distances(points({{0, 0}}), points({{1, 1}}))(0, 0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  Rng rng(10);
  const Eigen::MatrixXd a = random_matrix(13, 2, rng), b = random_matrix(7, 2, rng);
  const Eigen::MatrixXd d = map_distances(a, b);
  for (Eigen::Index i = 0; i < 13; ++i)
    for (Eigen::Index j = 0; j < 7; ++j) {
      const double dx = a(i, 0) - b(j, 0), dy = a(i, 1) - b(j, 1);
      CHECK(std::abs(d(i, j) - std::sqrt(dx * dx + dy * dy)) < 1e-9);
    }
  CHECK((map_distances(b, a) - d.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("threshold tau") {
  // minimum distances 1, 2, 3, 4 along one axis
  MapPair m{points({{1, 0}, {2, 0}, {3, 0}, {4, 0}}), points({{0, 0}})};
  const TauResult r = threshold_tau(std::span<const MapPair>(&m, 1));
  CHECK(r.tau == 2.5);
  CHECK_FALSE(r.degenerate);

  MapPair same{points({{0.1, 0.1}, {0.5, 0.5}}), points({{0.1, 0.1}, {0.5, 0.5}, {0.9, 0.2}})};
  CHECK(threshold_tau(std::span<const MapPair>(&same, 1)).degenerate);

  Rng rng(11);
  std::vector<MapPair> maps;
  std::vector<double> pooled;
  for (int k = 0; k < 3; ++k) {
    maps.push_back(MapPair{random_matrix(11, 2, rng), random_matrix(9, 2, rng)});
    const auto mins = oracle::min_distances(maps.back().generated, maps.back().dataset);
    pooled.insert(pooled.end(), mins.begin(), mins.end());
  }
  CHECK(threshold_tau(maps).tau == doctest::Approx(oracle::median(pooled)).epsilon(1e-15));
  CHECK_THROWS_AS(threshold_tau(std::span<const MapPair>{}), PreconditionError);
}

TEST_CASE("jaccard index on hand geometry") {
  const Eigen::MatrixXd mg = points({{0, 0}, {1, 1}}), md = points({{0, 0}, {0.9, 0.9}});
  const JaccardResult wide = jaccard_index(mg, md, 0.2);
  CHECK(wide.j == 1.0);
  CHECK(wide.matched_generated == 2);
  CHECK(wide.matched_dataset == 2);
  const JaccardResult tight = jaccard_index(mg, md, 0.1);
  CHECK(tight.j == 0.5);
  CHECK(tight.matched_generated == 1);
  CHECK(tight.matched_dataset == 1);
  CHECK(jaccard_index(mg, md, 0.1, JaccardVariant::Literal).j == 0.25);
  CHECK(jaccard_index(mg, md, 0.1, JaccardVariant::Overlap).j == doctest::Approx(1.0 / 3.0));
  CHECK(jaccard_index(mg, mg, 1e-9).j == 1.0);
  CHECK(jaccard_index(mg, md + Eigen::MatrixXd::Constant(2, 2, 5.0), 1.0).j == 0.0);
  CHECK_THROWS_AS(jaccard_index(mg, md, 0.0), PreconditionError);
  CHECK_THROWS_AS(jaccard_index(mg, md, -1.0), PreconditionError);
}

TEST_CASE("jaccard index: bounds, oracle agreement and monotonicity in tau") {
  Rng rng(12);
  for (int t = 0; t < 30; ++t) {
    const Eigen::MatrixXd mg = (random_matrix(25, 2, rng).array() + 1.0) / 2.0;
    const Eigen::MatrixXd md = (random_matrix(30, 2, rng).array() + 1.0) / 2.0;
    double prev = 0.0;
    for (double tau = 0.01; tau < 1.5; tau += 0.03) {
      const double j = jaccard_index(mg, md, tau).j;
      CHECK(j >= 0.0);
      CHECK(j <= 1.0);
      CHECK(j >= prev);
      CHECK(j == doctest::Approx(oracle::jaccard(mg, md, tau)).epsilon(1e-15));
      prev = j;
    }
  }
}

TEST_CASE("variant names round-trip") {
  for (JaccardVariant v : {JaccardVariant::Symmetric, JaccardVariant::Literal, JaccardVariant::Overlap})
    CHECK(parse_jaccard_variant(to_string(v)) == v);
  CHECK_THROWS(parse_jaccard_variant("union"));
}
