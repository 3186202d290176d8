#include "coegan/fid.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <map>

#include "coegan/adam.hpp"
#include "coegan/gan.hpp"

namespace coegan {

namespace {

void append_rows(Eigen::MatrixXd& dst, std::size_t first, const Tensor& rows) {
  const std::size_t d = rows.sample_size();
  for (std::size_t i = 0; i < rows.batch(); ++i)
    for (std::size_t j = 0; j < d; ++j)
      dst(static_cast<Eigen::Index>(first + i), static_cast<Eigen::Index>(j)) = rows.data[i * d + j];
}

double symmetric_tolerance(const Eigen::MatrixXd& m) { return 1e-6 * std::max(1.0, m.cwiseAbs().maxCoeff()); }

}  // namespace

FeatureMatrix extract_features(const Network& network, const Tensor& samples, std::size_t chunk) {
  if (network.size() < 2) throw PreconditionError("extract_features: network has no hidden layer");
  const std::size_t n = samples.batch();
  FeatureMatrix fm;
  fm.source = to_string(network.role()) + "-hidden";
  std::size_t d = 0;
  for (std::size_t first = 0; first < n; first += chunk) {
    const std::size_t count = std::min(chunk, n - first);
    Tensor h = network.hidden_features(slice_batch(samples, first, count));
    if (first == 0) {
      d = h.sample_size();
      fm.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    }
    append_rows(fm.values, first, h);
  }
  if (n == 0) fm.values.resize(0, static_cast<Eigen::Index>(network.layers()[network.size() - 2].geom.out_channels));
  return fm;
}

FeatureMatrix PixelFeatureExtractor::extract(const Tensor& samples) const {
  FeatureMatrix fm;
  fm.source = "pixels";
  fm.values.resize(static_cast<Eigen::Index>(samples.batch()), static_cast<Eigen::Index>(samples.sample_size()));
  append_rows(fm.values, 0, samples);
  return fm;
}

GaussianStats gaussian_stats(const FeatureMatrix& features) {
  const auto n = features.values.rows();
  if (n < 2) throw PreconditionError("gaussian_stats: need at least 2 samples, got " + std::to_string(n));
  GaussianStats s;
  s.mu = features.values.colwise().mean().transpose();
  const Eigen::MatrixXd centered = features.values.rowwise() - s.mu.transpose();
  s.sigma = (centered.transpose() * centered) / static_cast<double>(n - 1);
  s.sigma = 0.5 * (s.sigma + s.sigma.transpose()).eval();
  return s;
}

GaussianStats shrink_covariance(GaussianStats stats, std::size_t sample_count) {
  const auto d = stats.sigma.rows();
  if (d == 0) return stats;
  bool singular = sample_count < static_cast<std::size_t>(d) + 1;
  if (!singular) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(stats.sigma, Eigen::EigenvaluesOnly);
    const double hi = es.eigenvalues().maxCoeff();
    singular = es.eigenvalues().minCoeff() <= 1e-12 * std::max(hi, 1e-300);
  }
  if (singular) {
    const double trace = stats.sigma.trace();
    const double lambda = trace > 0.0 ? 1e-6 * trace / static_cast<double>(d) : 1e-12;
    stats.sigma.diagonal().array() += lambda;
  }
  return stats;
}

Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw ShapeError("sqrtm_psd: matrix is not square");
  const double tol = symmetric_tolerance(m);
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > tol) {
    throw PreconditionError("sqrtm_psd: matrix is not symmetric within tolerance");
  }
  if (m.size() == 0) return m;
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw NumericError("sqrtm_psd: eigendecomposition failed");
  Eigen::VectorXd ev = es.eigenvalues();
  if (ev.minCoeff() < -tol) throw PreconditionError("sqrtm_psd: matrix has a significantly negative eigenvalue");
  ev = ev.cwiseMax(0.0).cwiseSqrt();
  Eigen::MatrixXd r = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (r + r.transpose());
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  if (a.mu.size() != b.mu.size() || a.sigma.rows() != b.sigma.rows() || a.sigma.rows() != a.mu.size()) {
    throw ShapeError("frechet_distance: dimension mismatch (" + std::to_string(a.mu.size()) + " vs " +
                     std::to_string(b.mu.size()) + ")");
  }
  const double mean_term = (a.mu - b.mu).squaredNorm();
  const Eigen::MatrixXd ra = sqrtm_psd(a.sigma);
  Eigen::MatrixXd sandwich = ra * b.sigma * ra;
  sandwich = 0.5 * (sandwich + sandwich.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sandwich, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericError("frechet_distance: eigendecomposition failed");
  const double cross = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double fd = mean_term + a.sigma.trace() + b.sigma.trace() - 2.0 * cross;
  return std::max(fd, 0.0);
}

double fid_score(const FeatureExtractor& extractor, const Tensor& samples, const GaussianStats& reference) {
  const FeatureMatrix fm = extractor.extract(samples);
  return frechet_distance(shrink_covariance(gaussian_stats(fm), fm.n()), reference);
}

Network train_feature_classifier(const Dataset& data, const ClassifierConfig& cfg, std::uint64_t seed) {
  Rng rng = make_rng(seed, {0xfea7});
  const bool supervised = data.has_labels() && data.label_count() >= 2;
  std::map<int, std::size_t> class_index;
  if (supervised) {
    for (int l : data.labels) class_index.emplace(l, 0);
    std::size_t k = 0;
    for (auto& [label, idx] : class_index) idx = k++;
  }
  const std::size_t outputs = supervised ? class_index.size() : 1;

  Network net(Role::Discriminator, data.sample_shape());
  Layer conv(conv_geometry(data.sample_shape(), cfg.conv_channels, 3), Activation::ReLU);
  initialize(conv, rng);
  net.add_layer(conv);
  Layer hidden(linear_geometry(shape_size(net.output_shape()), cfg.hidden), Activation::ReLU);
  initialize(hidden, rng);
  net.add_layer(hidden);
  Layer out(linear_geometry(cfg.hidden, outputs), Activation::Sigmoid);
  initialize(out, rng);
  net.add_layer(out);

  AdamState opt;
  AdamConfig adam;
  adam.learning_rate = cfg.learning_rate;
  const std::size_t b = cfg.batch_size;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::vector<std::size_t> idx(b);
    for (auto& i : idx) i = uniform_int<std::size_t>(rng, 0, data.size() - 1);
    Tensor x = data.gather(idx);
    Tensor target({supervised ? b : 2 * b, outputs});
    if (supervised) {
      for (std::size_t i = 0; i < b; ++i) target.data[i * outputs + class_index.at(data.labels[idx[i]])] = 1.0f;
    } else {
      Tensor shuffled = x;
      for (std::size_t i = 0; i < b; ++i) {
        auto s = shuffled.sample(i);
        std::shuffle(s.begin(), s.end(), rng);
        target.data[i] = 1.0f;
      }
      x = concat_batch(x, shuffled);
    }
    ForwardTrace trace;
    Tensor p = net.forward(x, trace);
    // Binary cross-entropy through the sigmoid: dL/dp = (p - y) / (p (1 - p)) / count.
    Tensor upstream(p.shape);
    const double scale = 1.0 / static_cast<double>(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double pi = clamp_probability(p.data[i]);
      upstream.data[i] = static_cast<float>(scale * (pi - target.data[i]) / (pi * (1.0 - pi)));
    }
    NetworkGradients g = net.backward(trace, upstream, false);
    auto params = net.parameters();
    adam_step(params, g.params, opt, adam);
  }
  return net;
}

}  // namespace coegan
