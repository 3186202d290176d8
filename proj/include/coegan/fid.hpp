#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <string>

#include "coegan/dataset.hpp"
#include "coegan/network.hpp"

namespace coegan {

// n x d feature rows, one per sample.
struct FeatureMatrix {
  Eigen::MatrixXd values;
  std::string source;

  std::size_t n() const noexcept { return static_cast<std::size_t>(values.rows()); }
  std::size_t d() const noexcept { return static_cast<std::size_t>(values.cols()); }
};

struct GaussianStats {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
};

// Last-hidden-layer activations of a network, evaluated in chunks.
FeatureMatrix extract_features(const Network& network, const Tensor& samples, std::size_t chunk = 256);

// Sample mean and unbiased (n - 1) covariance, symmetrized.
GaussianStats gaussian_stats(const FeatureMatrix& features);

// Adds lambda * I with lambda = 1e-6 * trace / d when the fit came from fewer
// than d + 1 samples or the covariance is numerically singular.
GaussianStats shrink_covariance(GaussianStats stats, std::size_t sample_count);

// Principal square root of a symmetric PSD matrix via eigendecomposition.
// Negative eigenvalues down to -1e-6 (relative) are clamped to zero.
Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& m);

// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)), with the cross term
// evaluated as Tr sqrtm(sqrtm(S_a) S_b sqrtm(S_a)).
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

// Maps sample batches into the feature space used for generator fitness.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual FeatureMatrix extract(const Tensor& samples) const = 0;
  virtual std::string name() const = 0;
};

class NetworkFeatureExtractor final : public FeatureExtractor {
 public:
  explicit NetworkFeatureExtractor(Network network) : network_(std::move(network)) {}
  FeatureMatrix extract(const Tensor& samples) const override { return extract_features(network_, samples); }
  std::string name() const override { return "classifier"; }
  const Network& network() const noexcept { return network_; }

 private:
  Network network_;
};

// Flattened pixels; the identity feature map.
class PixelFeatureExtractor final : public FeatureExtractor {
 public:
  FeatureMatrix extract(const Tensor& samples) const override;
  std::string name() const override { return "pixels"; }
};

struct ClassifierConfig {
  std::size_t conv_channels = 16;
  std::size_t hidden = 32;
  std::size_t steps = 300;
  std::size_t batch_size = 64;
  double learning_rate = 0.003;
};

// Small conv classifier trained on the dataset's labels (one-vs-rest sigmoid
// outputs). Without labels it learns to tell real images from pixel-shuffled
// copies. The network is returned frozen; its hidden layer is the feature map.
Network train_feature_classifier(const Dataset& data, const ClassifierConfig& cfg, std::uint64_t seed);

// FID of a batch of samples against precomputed reference statistics.
double fid_score(const FeatureExtractor& extractor, const Tensor& samples, const GaussianStats& reference);

}  // namespace coegan
