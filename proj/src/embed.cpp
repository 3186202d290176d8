#include "coegan/embed.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace coegan {

// ---------------------------------------------------------------------------
// PCA

PcaResult pca_reduce(const FeatureMatrix& x, std::size_t k) {
  const auto n = x.values.rows();
  const auto d = x.values.cols();
  if (k == 0 || k > static_cast<std::size_t>(std::min(n, d))) {
    throw PreconditionError("pca_reduce: k = " + std::to_string(k) + " must lie in [1, min(n, d)] = [1, " +
                            std::to_string(std::min(n, d)) + "]");
  }
  const auto kk = static_cast<Eigen::Index>(k);
  PcaResult r;
  r.mean = x.values.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.values.rowwise() - r.mean.transpose();
  const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;

  r.components.resize(d, kk);
  r.variances.resize(kk);
  if (d <= n) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es((centered.transpose() * centered) / denom);
    for (Eigen::Index c = 0; c < kk; ++c) {
      r.variances(c) = std::max(es.eigenvalues()(d - 1 - c), 0.0);
      r.components.col(c) = es.eigenvectors().col(d - 1 - c);
    }
  } else {
    // Fewer samples than features: diagonalize the n x n Gram matrix instead.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es((centered * centered.transpose()) / denom);
    for (Eigen::Index c = 0; c < kk; ++c) {
      const double lambda = std::max(es.eigenvalues()(n - 1 - c), 0.0);
      r.variances(c) = lambda;
      Eigen::VectorXd v = centered.transpose() * es.eigenvectors().col(n - 1 - c);
      const double norm = v.norm();
      r.components.col(c) = norm > 0.0 ? Eigen::VectorXd(v / norm) : Eigen::VectorXd::Zero(d);
    }
  }

  const double top = r.variances(0);
  for (Eigen::Index c = 0; c < kk; ++c) {
    if (r.variances(c) <= 1e-12 * std::max(top, std::numeric_limits<double>::min())) r.rank_deficient = true;
    Eigen::Index arg = 0;
    r.components.col(c).cwiseAbs().maxCoeff(&arg);
    if (r.components(arg, c) < 0.0) r.components.col(c) *= -1.0;
  }

  r.projected.values = centered * r.components;
  r.projected.source = x.source + "+pca" + std::to_string(k);
  return r;
}

// ---------------------------------------------------------------------------
// Affinities

PerplexityRow perplexity_calibrate(std::span<const double> sq_distances, double target) {
  const std::size_t m = sq_distances.size();
  if (m == 0 || target < 1.0 || target > static_cast<double>(m)) {
    throw PreconditionError("perplexity_calibrate: target " + std::to_string(target) + " outside [1, " +
                            std::to_string(m) + "]");
  }
  PerplexityRow row;
  row.probs.assign(m, 1.0 / static_cast<double>(m));

  const double dmin = *std::min_element(sq_distances.begin(), sq_distances.end());
  std::vector<double> shifted(m);
  double mean_shift = 0.0;
  std::size_t nearest_ties = 0;
  for (std::size_t j = 0; j < m; ++j) {
    shifted[j] = sq_distances[j] - dmin;
    mean_shift += shifted[j];
    if (shifted[j] == 0.0) ++nearest_ties;
  }
  mean_shift /= static_cast<double>(m);

  // Perplexity falls monotonically from m (beta = 0) towards the number of
  // nearest ties (beta -> inf); targets outside that range are unreachable.
  if (nearest_ties == m || target < static_cast<double>(nearest_ties)) {
    row.perplexity = nearest_ties == m ? static_cast<double>(m) : 0.0;
    row.degenerate = std::abs(static_cast<double>(m) - target) > kPerplexityTolerance || nearest_ties != m;
    if (nearest_ties == m) row.perplexity = static_cast<double>(m);
    return row;
  }

  auto evaluate = [&](double beta, std::vector<double>& p) {
    double z = 0.0, weighted = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      p[j] = std::exp(-beta * shifted[j]);
      z += p[j];
      weighted += shifted[j] * p[j];
    }
    for (double& v : p) v /= z;
    const double entropy = std::log(z) + beta * weighted / z;  // nats
    return std::exp(entropy);
  };

  double beta = 1.0 / mean_shift;
  double lo = 0.0, hi = std::numeric_limits<double>::infinity();
  std::vector<double> p(m);
  double perp = 0.0, used = beta;
  for (row.iterations = 1; row.iterations <= 100; ++row.iterations) {
    used = beta;
    perp = evaluate(beta, p);
    if (std::abs(perp - target) < 1e-5) break;
    if (perp > target) {
      lo = beta;
      beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (lo + hi);
    } else {
      hi = beta;
      beta = 0.5 * (lo + hi);
    }
  }
  row.iterations = std::min<std::size_t>(row.iterations, 100);
  row.probs = std::move(p);
  row.beta = used;
  row.perplexity = perp;
  return row;
}

AffinityModel compute_affinities(const Eigen::MatrixXd& x, double perplexity) {
  const auto n = x.rows();
  if (n < 2) throw PreconditionError("compute_affinities: need at least 2 points");
  if (perplexity < 1.0 || perplexity > static_cast<double>(n - 1)) {
    throw PreconditionError("compute_affinities: perplexity " + std::to_string(perplexity) + " outside [1, " +
                            std::to_string(n - 1) + "]");
  }
  const Eigen::VectorXd norms = x.rowwise().squaredNorm();
  Eigen::MatrixXd sq = (-2.0 * x * x.transpose()).colwise() + norms;
  sq.rowwise() += norms.transpose();

  AffinityModel model;
  model.perplexity = perplexity;
  model.p = Eigen::MatrixXd::Zero(n, n);
  std::vector<double> dist(static_cast<std::size_t>(n - 1));
  for (Eigen::Index i = 0; i < n; ++i) {
    std::size_t k = 0;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) dist[k++] = std::max(sq(j, i), 0.0);
    PerplexityRow row = perplexity_calibrate(dist, perplexity);
    if (row.degenerate) ++model.degenerate_rows;
    model.achieved.push_back(row.perplexity);
    model.sigma.push_back(row.beta > 0.0 ? std::sqrt(1.0 / (2.0 * row.beta)) : std::numeric_limits<double>::infinity());
    k = 0;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) model.p(j, i) = row.probs[k++];  // column i holds p_{.|i}
  }
  model.p = (model.p + model.p.transpose()).eval() / (2.0 * static_cast<double>(n));
  model.p /= model.p.sum();
  return model;
}

// ---------------------------------------------------------------------------
// t-SNE

TsneResult tsne_embed(const FeatureMatrix& x, const TsneConfig& cfg, const KlObserver& observer) {
  const std::size_t n = x.n();
  if (n < 5) throw PreconditionError("tsne_embed: need at least 5 points, got " + std::to_string(n));
  TsneResult result;
  if (static_cast<double>(n) < 3.0 * cfg.perplexity) {
    result.warnings.push_back("n = " + std::to_string(n) + " is below 3 x perplexity (" +
                              std::to_string(cfg.perplexity) + ")");
  }
  const AffinityModel aff = compute_affinities(x.values, cfg.perplexity);
  result.degenerate_rows = aff.degenerate_rows;
  const double* P = aff.p.data();  // symmetric, so column-major reads along rows are fine

  double p_log_p = 0.0;
  for (Eigen::Index i = 0; i < aff.p.size(); ++i)
    if (P[i] > 0.0) p_log_p += P[i] * std::log(P[i]);

  Rng rng = make_rng(cfg.seed, {0x75e});
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> y(2 * n), update(2 * n, 0.0), gains(2 * n, 1.0), grad(2 * n);
  for (double& v : y) v = cfg.init_scale * normal(rng);

  // Returns KL(P || Q) at the current positions; fills grad when exag > 0.
  auto evaluate = [&](double exag, bool want_grad) {
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const double dx = y[2 * i] - y[2 * j], dy = y[2 * i + 1] - y[2 * j + 1];
        z += 1.0 / (1.0 + dx * dx + dy * dy);
      }
    }
    z *= 2.0;
    const double log_z = std::log(z);
    double p_log_num = 0.0;
    if (want_grad) std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double* prow = P + i * n;
      for (std::size_t j = i + 1; j < n; ++j) {
        const double dx = y[2 * i] - y[2 * j], dy = y[2 * i + 1] - y[2 * j + 1];
        const double sq = dx * dx + dy * dy;
        const double num = 1.0 / (1.0 + sq);
        const double pij = prow[j];
        if (pij > 0.0) p_log_num -= pij * std::log1p(sq);
        if (want_grad) {
          const double c = 4.0 * (exag * pij - num / z) * num;
          grad[2 * i] += c * dx;
          grad[2 * i + 1] += c * dy;
          grad[2 * j] -= c * dx;
          grad[2 * j + 1] -= c * dy;
        }
      }
    }
    // KL = sum p log p - sum p log q, with log q = log num - log Z over ordered pairs.
    return p_log_p - (2.0 * p_log_num - log_z);
  };

  result.kl.reserve(cfg.iterations);
  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    const double exag = it <= cfg.exaggeration_iterations ? cfg.exaggeration : 1.0;
    const double momentum = it < cfg.momentum_switch ? cfg.initial_momentum : cfg.final_momentum;
    const double kl_before = evaluate(exag, true);
    if (it > 1) {
      result.kl.push_back(kl_before);
      if (observer) observer(it - 1, kl_before);
    }
    for (std::size_t k = 0; k < 2 * n; ++k) {
      if (!std::isfinite(grad[k])) {
        throw NumericError("tsne_embed: non-finite gradient at iteration " + std::to_string(it) + ", point " +
                           std::to_string(k / 2));
      }
      const bool same_sign = (grad[k] > 0.0) == (update[k] > 0.0);
      gains[k] = std::max(same_sign ? gains[k] * 0.8 : gains[k] + 0.2, cfg.min_gain);
      update[k] = momentum * update[k] - cfg.learning_rate * gains[k] * grad[k];
      y[k] += update[k];
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mx += y[2 * i];
      my += y[2 * i + 1];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[2 * i] -= mx;
      y[2 * i + 1] -= my;
    }
  }
  if (cfg.iterations > 0) {
    const double kl_final = evaluate(1.0, false);
    result.kl.push_back(kl_final);
    if (observer) observer(cfg.iterations, kl_final);
  }

  result.points.resize(static_cast<Eigen::Index>(n), 2);
  for (std::size_t i = 0; i < n; ++i) {
    result.points(static_cast<Eigen::Index>(i), 0) = y[2 * i];
    result.points(static_cast<Eigen::Index>(i), 1) = y[2 * i + 1];
  }
  return result;
}

// ---------------------------------------------------------------------------
// Maps

std::string generator_label(std::size_t generation) { return "generator@" + std::to_string(generation); }

std::vector<std::size_t> EmbeddingMap::indices_of(const std::string& label) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == label) idx.push_back(i);
  return idx;
}

Eigen::MatrixXd EmbeddingMap::subset(const std::string& label) const {
  const auto idx = indices_of(label);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), 2);
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = points.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

EmbeddingMap normalize_map(const Eigen::MatrixXd& points, std::vector<std::string> labels, std::string provenance) {
  if (points.cols() != 2) throw ShapeError("normalize_map: points must be n x 2");
  if (static_cast<std::size_t>(points.rows()) != labels.size()) {
    throw ShapeError("normalize_map: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(points.rows()) + " points");
  }
  const Eigen::RowVector2d lo = points.colwise().minCoeff();
  const Eigen::RowVector2d hi = points.colwise().maxCoeff();
  const Eigen::RowVector2d span = hi - lo;
  if (points.rows() < 2 || (span.array() <= 0.0).all()) {
    throw PreconditionError("normalize_map: embedding is degenerate (all points identical)");
  }
  EmbeddingMap map;
  map.points.resize(points.rows(), 2);
  for (Eigen::Index c = 0; c < 2; ++c) {
    if (span(c) > 0.0) {
      map.points.col(c) = ((points.col(c).array() - lo(c)) / span(c)).matrix();
    } else {
      map.points.col(c).setZero();
    }
  }
  map.labels = std::move(labels);
  map.provenance = std::move(provenance);
  return map;
}

GridAssignment grid_montage(const Eigen::MatrixXd& points, std::size_t grid) {
  const std::size_t n = static_cast<std::size_t>(points.rows());
  const std::size_t m = grid * grid;
  if (grid == 0 || m < n) {
    throw PreconditionError("grid_montage: " + std::to_string(grid) + "x" + std::to_string(grid) +
                            " grid cannot hold " + std::to_string(n) + " points");
  }
  auto cost = [&](std::size_t i, std::size_t cell) {
    const double cx = (static_cast<double>(cell % grid) + 0.5) / static_cast<double>(grid);
    const double cy = (static_cast<double>(cell / grid) + 0.5) / static_cast<double>(grid);
    const double dx = points(static_cast<Eigen::Index>(i), 0) - cx;
    const double dy = points(static_cast<Eigen::Index>(i), 1) - cy;
    return dx * dx + dy * dy;
  };

  // Shortest augmenting path Hungarian method, rows = points, columns = cells.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> owner(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    owner[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = owner[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  GridAssignment a;
  a.grid = grid;
  a.cell.assign(n, 0);
  for (std::size_t j = 1; j <= m; ++j) {
    if (owner[j] != 0) a.cell[owner[j] - 1] = j - 1;
  }
  for (std::size_t i = 0; i < n; ++i) a.cost += cost(i, a.cell[i]);
  return a;
}

Tensor render_montage(const GridAssignment& assignment, const Tensor& images) {
  if (images.rank() != 4) throw ShapeError("render_montage: images must be n x C x H x W");
  if (images.batch() != assignment.cell.size()) throw ShapeError("render_montage: one image per assigned point required");
  const std::size_t c = images.shape[1], h = images.shape[2], w = images.shape[3], g = assignment.grid;
  Tensor out({c, g * h, g * w});
  for (std::size_t i = 0; i < assignment.cell.size(); ++i) {
    const std::size_t row = assignment.cell[i] / g, col = assignment.cell[i] % g;
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
          out.data[(ch * g * h + row * h + y) * g * w + col * w + x] = images.data[((i * c + ch) * h + y) * w + x];
  }
  return out;
}

Eigen::MatrixXd map_distances(const Eigen::MatrixXd& mg, const Eigen::MatrixXd& md) {
  if (mg.cols() != md.cols()) throw ShapeError("map_distances: point dimensionality differs");
  Eigen::MatrixXd d(mg.rows(), md.rows());
  for (Eigen::Index i = 0; i < mg.rows(); ++i)
    for (Eigen::Index j = 0; j < md.rows(); ++j) d(i, j) = (mg.row(i) - md.row(j)).norm();
  return d;
}

TauResult threshold_tau(std::span<const MapPair> maps) {
  TauResult r;
  for (const MapPair& m : maps) {
    if (m.generated.rows() == 0) continue;
    if (m.dataset.rows() == 0) throw PreconditionError("threshold_tau: dataset map is empty");
    const Eigen::MatrixXd d = map_distances(m.generated, m.dataset);
    for (Eigen::Index i = 0; i < d.rows(); ++i) r.min_distances.push_back(d.row(i).minCoeff());
  }
  if (r.min_distances.empty()) throw PreconditionError("threshold_tau: no generated points supplied");
  std::vector<double> sorted = r.min_distances;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t k = sorted.size();
  r.tau = k % 2 == 1 ? sorted[k / 2] : 0.5 * (sorted[k / 2 - 1] + sorted[k / 2]);
  r.degenerate = !(r.tau > 0.0);
  return r;
}

std::string to_string(JaccardVariant v) {
  switch (v) {
    case JaccardVariant::Symmetric: return "symmetric";
    case JaccardVariant::Literal: return "literal";
    case JaccardVariant::Overlap: return "overlap";
  }
  return "?";
}

JaccardVariant parse_jaccard_variant(const std::string& s) {
  for (JaccardVariant v : {JaccardVariant::Symmetric, JaccardVariant::Literal, JaccardVariant::Overlap})
    if (to_string(v) == s) return v;
  throw ConfigError("unknown jaccard variant '" + s + "'");
}

JaccardResult jaccard_index(const Eigen::MatrixXd& mg, const Eigen::MatrixXd& md, double tau, JaccardVariant variant) {
  if (!(tau > 0.0)) throw PreconditionError("jaccard_index: tau must be positive");
  if (mg.rows() == 0 || md.rows() == 0) throw PreconditionError("jaccard_index: maps must be non-empty");
  const Eigen::MatrixXd d = map_distances(mg, md);
  JaccardResult r;
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    if (d.row(i).minCoeff() < tau) ++r.matched_generated;
  for (Eigen::Index j = 0; j < d.cols(); ++j)
    if (d.col(j).minCoeff() < tau) ++r.matched_dataset;
  const double g = static_cast<double>(mg.rows()), m = static_cast<double>(md.rows());
  const double ig = static_cast<double>(r.matched_generated);
  switch (variant) {
    case JaccardVariant::Symmetric: r.j = (ig + static_cast<double>(r.matched_dataset)) / (g + m); break;
    case JaccardVariant::Literal: r.j = ig / (g + m); break;
    case JaccardVariant::Overlap: r.j = ig / (g + m - ig); break;
  }
  return r;
}

}  // namespace coegan
