#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "coegan/fid.hpp"

namespace coegan {

// ---------------------------------------------------------------------------
// PCA

struct PcaResult {
  FeatureMatrix projected;  // n x k
  Eigen::VectorXd variances;  // captured variance per component, descending
  Eigen::MatrixXd components;  // d x k, unit columns
  Eigen::VectorXd mean;
  bool rank_deficient = false;  // some of the k components carry zero variance
};

// Mean-centred projection onto the top-k principal axes. Each axis is signed
// so that its largest-magnitude coordinate is positive.
PcaResult pca_reduce(const FeatureMatrix& x, std::size_t k);

// ---------------------------------------------------------------------------
// Affinities

struct PerplexityRow {
  std::vector<double> probs;
  double beta = 0.0;  // precision 1 / (2 sigma^2)
  double perplexity = 0.0;  // achieved 2^H
  std::size_t iterations = 0;
  bool degenerate = false;  // target unreachable; row set uniform
};

inline constexpr double kPerplexityTolerance = 1e-3;

// Conditional distribution p_{j|i} over the other points given their squared
// distances, with bandwidth found by bisection (at most 100 steps).
PerplexityRow perplexity_calibrate(std::span<const double> sq_distances, double target);

struct AffinityModel {
  Eigen::MatrixXd p;  // symmetric joint affinities, zero diagonal, sums to 1
  double perplexity = 0.0;
  std::vector<double> sigma;
  std::vector<double> achieved;
  std::size_t degenerate_rows = 0;
};

AffinityModel compute_affinities(const Eigen::MatrixXd& x, double perplexity);

// ---------------------------------------------------------------------------
// t-SNE

struct TsneConfig {
  double perplexity = 30.0;
  std::size_t iterations = 1000;
  std::uint64_t seed = 0;
  double learning_rate = 200.0;
  double exaggeration = 4.0;
  std::size_t exaggeration_iterations = 100;
  std::size_t momentum_switch = 250;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  double init_scale = 1e-4;
  double min_gain = 0.01;
};

struct TsneResult {
  Eigen::MatrixXd points;  // n x 2
  std::vector<double> kl;  // KL(P || Q) after each iteration, unexaggerated P
  std::vector<std::string> warnings;
  std::size_t degenerate_rows = 0;

  double kl_at(std::size_t iteration) const { return kl.at(iteration - 1); }
};

using KlObserver = std::function<void(std::size_t iteration, double kl)>;

// Exact O(n^2) t-SNE into two dimensions.
TsneResult tsne_embed(const FeatureMatrix& x, const TsneConfig& cfg, const KlObserver& observer = {});

// ---------------------------------------------------------------------------
// Maps and the overlap metric

inline const std::string kDatasetLabel = "dataset";
std::string generator_label(std::size_t generation);

struct EmbeddingMap {
  Eigen::MatrixXd points;  // n x 2 in [0, 1]^2
  std::vector<std::string> labels;
  std::string provenance;

  std::vector<std::size_t> indices_of(const std::string& label) const;
  Eigen::MatrixXd subset(const std::string& label) const;
};

// Per-axis min-max rescale over all points onto the unit square.
EmbeddingMap normalize_map(const Eigen::MatrixXd& points, std::vector<std::string> labels, std::string provenance);

struct GridAssignment {
  std::size_t grid = 0;  // g, for g x g cells
  std::vector<std::size_t> cell;  // cell index (row * g + col) of each point
  double cost = 0.0;  // total squared point-to-cell-centre distance
};

// Minimum-cost assignment of points to distinct cells of a g x g grid over
// the unit square.
GridAssignment grid_montage(const Eigen::MatrixXd& points, std::size_t grid);

// Tiles sample images (n x C x H x W) by their cells: C x (g*H) x (g*W).
Tensor render_montage(const GridAssignment& assignment, const Tensor& images);

// D[i][j] = || mg_i - md_j ||.
Eigen::MatrixXd map_distances(const Eigen::MatrixXd& mg, const Eigen::MatrixXd& md);

struct MapPair {
  Eigen::MatrixXd generated;
  Eigen::MatrixXd dataset;
};

struct TauResult {
  double tau = 0.0;
  bool degenerate = false;  // tau == 0
  std::vector<double> min_distances;  // pooled, in input order
};

// Median of the pooled minimum generated-to-dataset distances.
TauResult threshold_tau(std::span<const MapPair> maps);

enum class JaccardVariant {
  Symmetric,  // (|matched G| + |matched d|) / (|G| + |d|)
  Literal,  // |matched G| / (|G| + |d|)
  Overlap,  // |matched G| / (|G| + |d| - |matched G|)
};

std::string to_string(JaccardVariant v);
JaccardVariant parse_jaccard_variant(const std::string& s);

struct JaccardResult {
  double j = 0.0;
  std::size_t matched_generated = 0;
  std::size_t matched_dataset = 0;
};

// Matches use the strict test distance < tau.
JaccardResult jaccard_index(const Eigen::MatrixXd& mg, const Eigen::MatrixXd& md, double tau,
                            JaccardVariant variant = JaccardVariant::Symmetric);

}  // namespace coegan
